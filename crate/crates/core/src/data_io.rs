//! File formats (bit-exact little-endian binaries plus CSV interop),
//! synthetic subspace datasets, and CSV exports for affinities and
//! PCA scatters.
//!
//! Embedding container (`.scle`): magic `SCLE`, version u32, dtype u8
//! (0 = f32, 1 = f64), n u64, d u64, then row-major values.
//! Checkpoint container (`.sclm`): magic `SCLM`, version u32, tensor count
//! u32, then per tensor: name length u32, UTF-8 name, rows u64, cols u64,
//! f64 values. All integers and floats little-endian.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clustering::symmetric_eigendecomp;
use crate::error::{Result, SclError};
use crate::model::ModelParams;
use crate::tensor::Matrix;

const EMBEDDING_MAGIC: &[u8; 4] = b"SCLE";
const CHECKPOINT_MAGIC: &[u8; 4] = b"SCLM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Write-temp-then-rename so readers never observe partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| SclError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| SclError::io(&tmp, e))?;
    file.sync_all().map_err(|e| SclError::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| SclError::io(path, e))?;
    Ok(())
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + len > self.bytes.len() {
            return Err(SclError::format(
                self.path,
                format!(
                    "truncated while reading {what}: need {} bytes at offset {}, file has {}",
                    len,
                    self.offset,
                    self.bytes.len()
                ),
            ));
        }
        let slice = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn write_embeddings(path: impl AsRef<Path>, m: &Matrix, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(25 + m.data().len() * dtype.size());
    bytes.extend_from_slice(EMBEDDING_MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.push(dtype.code());
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    match dtype {
        Dtype::F32 => {
            for &v in m.data() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in m.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    write_atomic(path, &bytes)
}

/// Read an embedding matrix. Files with a `.csv` extension are parsed as
/// comma-separated text (optional `#` comment lines); anything else must be
/// the binary container.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        return read_embeddings_csv(path);
    }
    let bytes = fs::read(path).map_err(|e| SclError::io(path, e))?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        offset: 0,
    };
    let magic = r.take(4, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(SclError::format(
            path,
            format!("bad magic {magic:?}, expected {EMBEDDING_MAGIC:?}"),
        ));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(SclError::format(
            path,
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let dtype = match r.u8("dtype")? {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => {
            return Err(SclError::format(path, format!("unknown dtype code {other}")));
        }
    };
    let n = r.u64("row count")? as usize;
    let d = r.u64("column count")? as usize;
    let count = n
        .checked_mul(d)
        .ok_or_else(|| SclError::format(path, "dimension overflow"))?;
    let payload_len = count * dtype.size();
    let expected_total = r.offset + payload_len;
    if bytes.len() != expected_total {
        return Err(SclError::format(
            path,
            format!(
                "payload length mismatch: expected {expected_total} bytes total, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let off = r.offset;
        let v = match dtype {
            Dtype::F32 => {
                let b = r.take(4, "value")?;
                f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64
            }
            Dtype::F64 => {
                let b = r.take(8, "value")?;
                f64::from_le_bytes(b.try_into().expect("8 bytes"))
            }
        };
        if !v.is_finite() {
            return Err(SclError::format(
                path,
                format!("non-finite value at byte offset {off} (element {i})"),
            ));
        }
        data.push(v);
    }
    Matrix::from_vec(n, d, data)
}

fn read_embeddings_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| SclError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for field in trimmed.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                SclError::parse(path, line_no, format!("invalid float {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(SclError::parse(path, line_no, "non-finite value"));
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(SclError::parse(
                    path,
                    line_no,
                    format!("expected {w} columns, found {}", row.len()),
                ));
            }
            _ => {}
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_atomic(path.as_ref(), text.as_bytes())
}

/// One nonnegative integer per line; trailing blank lines tolerated.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SclError::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut end = lines.len();
    while end > 0 && lines[end - 1].trim().is_empty() {
        end -= 1;
    }
    let mut labels = Vec::with_capacity(end);
    for (idx, line) in lines[..end].iter().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        let v: usize = trimmed
            .parse()
            .map_err(|_| SclError::parse(path, line_no, format!("invalid label {trimmed:?}")))?;
        labels.push(v);
    }
    Ok(labels)
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let named: Vec<(&str, &Matrix)> = params.tensors().to_vec();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, tensor) in named {
        bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.extend_from_slice(&(tensor.rows() as u64).to_le_bytes());
        bytes.extend_from_slice(&(tensor.cols() as u64).to_le_bytes());
        for &v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    ModelParams::from_named(read_named_tensors(path)?)
}

pub fn read_named_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, Matrix)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SclError::io(path, e))?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        offset: 0,
    };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(SclError::format(
            path,
            format!("bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"),
        ));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(SclError::format(
            path,
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name_bytes = r.take(name_len, "tensor name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| SclError::format(path, "tensor name is not UTF-8"))?
            .to_string();
        if tensors.iter().any(|(n, _)| *n == name) {
            return Err(SclError::format(path, format!("duplicate tensor {name}")));
        }
        let rows = r.u64("rows")? as usize;
        let cols = r.u64("cols")? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| SclError::format(path, "tensor dimension overflow"))?;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let off = r.offset;
            let b = r.take(8, "tensor value")?;
            let v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(SclError::format(
                    path,
                    format!("non-finite value in {name} at byte offset {off} (element {i})"),
                ));
            }
            data.push(v);
        }
        tensors.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    if r.offset != bytes.len() {
        return Err(SclError::format(
            path,
            format!("{} trailing bytes after last tensor", bytes.len() - r.offset),
        ));
    }
    Ok(tensors)
}

/// Parameters of the synthetic union-of-subspaces dataset: k clusters, each
/// sampled from its own random `subspace_dim`-dimensional linear subspace
/// of R^ambient_dim, plus isotropic Gaussian noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthSpec {
    pub k: usize,
    pub subspace_dim: usize,
    pub ambient_dim: usize,
    pub points_per_cluster: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.subspace_dim < 1 || self.points_per_cluster < 1 {
            return Err(SclError::contract("synthetic spec counts must be >= 1"));
        }
        if self.subspace_dim >= self.ambient_dim {
            return Err(SclError::contract(format!(
                "subspace_dim {} must be < ambient_dim {}",
                self.subspace_dim, self.ambient_dim
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SclError::contract("noise_sigma must be >= 0"));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Orthonormal basis of a random `dim`-dimensional subspace: Gram-Schmidt
/// over Gaussian columns, redrawing in the (measure-zero) degenerate case.
fn random_orthonormal_basis(rng: &mut ChaCha8Rng, ambient: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..ambient).map(|_| gaussian(rng)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        basis.push(v);
    }
    basis
}

/// Deterministic per seed. Points of cluster c occupy the contiguous row
/// block `[c * points_per_cluster, (c+1) * points_per_cluster)`.
pub fn synth_subspace_dataset(spec: &SynthSpec) -> Result<(Matrix, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.k * spec.points_per_cluster;
    let mut data = Vec::with_capacity(n * spec.ambient_dim);
    let mut labels = Vec::with_capacity(n);
    for cluster in 0..spec.k {
        let basis = random_orthonormal_basis(&mut rng, spec.ambient_dim, spec.subspace_dim);
        for _ in 0..spec.points_per_cluster {
            let coeffs: Vec<f64> = (0..spec.subspace_dim).map(|_| gaussian(&mut rng)).collect();
            let mut point = vec![0.0; spec.ambient_dim];
            for (b, &g) in basis.iter().zip(&coeffs) {
                for (p, &bv) in point.iter_mut().zip(b) {
                    *p += g * bv;
                }
            }
            if spec.noise_sigma > 0.0 {
                for p in point.iter_mut() {
                    *p += spec.noise_sigma * gaussian(&mut rng);
                }
            }
            data.extend_from_slice(&point);
            labels.push(cluster);
        }
    }
    Ok((Matrix::from_vec(n, spec.ambient_dim, data)?, labels))
}

fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Plain n x n CSV of a (raw or symmetrized) affinity matrix.
pub fn export_affinity_csv(a: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    if !a.is_finite() {
        return Err(SclError::contract("affinity contains non-finite values"));
    }
    write_atomic(path.as_ref(), matrix_to_csv(a).as_bytes())
}

/// Project rows of `z` onto the top-2 principal axes of the centered
/// covariance and write `pc1,pc2,label` rows under a header line.
pub fn export_pca_scatter(z: &Matrix, labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (n, d) = z.shape();
    if labels.len() != n {
        return Err(SclError::contract(format!(
            "scatter export: {} labels for {} rows",
            labels.len(),
            n
        )));
    }
    if n < 2 || d < 2 {
        return Err(SclError::contract(
            "scatter export requires at least 2 rows and 2 columns",
        ));
    }
    if !z.is_finite() {
        return Err(SclError::contract("latents contain non-finite values"));
    }
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in means.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    let mut centered = z.clone();
    for i in 0..n {
        for j in 0..d {
            centered.set(i, j, centered.get(i, j) - means[j]);
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut s = 0.0;
            for i in 0..n {
                s += centered.get(i, a) * centered.get(i, b);
            }
            s /= (n - 1) as f64;
            cov.set(a, b, s);
            cov.set(b, a, s);
        }
    }
    let (_, vectors) = symmetric_eigendecomp(&cov)?;
    // ascending order: the last two columns span the top-2 axes
    let pc = |i: usize, col: usize| -> f64 {
        (0..d).map(|j| centered.get(i, j) * vectors.get(j, col)).sum()
    };
    let mut out = String::from("pc1,pc2,label\n");
    for i in 0..n {
        let p1 = pc(i, d - 1);
        let p2 = pc(i, d - 2);
        out.push_str(&format!("{},{},{}\n", p1, p2, labels[i]));
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Projection;
    use rand::SeedableRng;

    fn tmp_dir() -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "scl-data-io-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn embedding_roundtrip_f64_is_bitwise() {
        let path = tmp_dir().join("roundtrip.scle");
        let m = Matrix::from_vec(7, 5, (0..35).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        write_embeddings(&path, &m, Dtype::F64).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn embedding_f32_widens() {
        let path = tmp_dir().join("widen.scle");
        let m = Matrix::from_vec(2, 2, vec![1.5, -2.25, 0.125, 3.0]).unwrap();
        write_embeddings(&path, &m, Dtype::F32).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back, m); // exactly representable in f32
    }

    #[test]
    fn truncated_embedding_names_byte_counts() {
        let path = tmp_dir().join("truncated.scle");
        let m = Matrix::from_vec(3, 3, (0..9).map(|i| i as f64).collect()).unwrap();
        write_embeddings(&path, &m, Dtype::F64).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = read_embeddings(&path).unwrap_err().to_string();
        assert!(err.contains("expected") && err.contains("bytes"), "{err}");
    }

    #[test]
    fn bad_magic_rejected() {
        let path = tmp_dir().join("badmagic.scle");
        fs::write(&path, b"NOPE_____________________").unwrap();
        let err = read_embeddings(&path).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn bad_version_and_dtype_rejected() {
        let dir = tmp_dir();
        let m = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();

        let path = dir.join("badver.scle");
        write_embeddings(&path, &m, Dtype::F64).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 9; // version
        fs::write(&path, &bytes).unwrap();
        let err = read_embeddings(&path).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");

        let path = dir.join("baddtype.scle");
        write_embeddings(&path, &m, Dtype::F64).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 7; // dtype code
        fs::write(&path, &bytes).unwrap();
        let err = read_embeddings(&path).unwrap_err().to_string();
        assert!(err.contains("dtype"), "{err}");
    }

    #[test]
    fn non_finite_payload_rejected_with_offset() {
        let dir = tmp_dir();
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let path = dir.join("nan.scle");
        write_embeddings(&path, &m, Dtype::F64).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // header is 25 bytes; overwrite element 2 with NaN
        let nan = f64::NAN.to_le_bytes();
        bytes[25 + 16..25 + 24].copy_from_slice(&nan);
        fs::write(&path, &bytes).unwrap();
        let err = read_embeddings(&path).unwrap_err().to_string();
        assert!(err.contains("non-finite") && err.contains("41"), "{err}");

        // checkpoints get the same treatment
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = ModelParams::init(Projection::Identity, 3, &mut rng).unwrap();
        let ck = dir.join("nan.sclm");
        write_checkpoint(&ck, &params).unwrap();
        let mut bytes = fs::read(&ck).unwrap();
        let len = bytes.len();
        bytes[len - 8..].copy_from_slice(&nan);
        fs::write(&ck, &bytes).unwrap();
        let err = read_checkpoint(&ck).unwrap_err().to_string();
        assert!(err.contains("non-finite"), "{err}");
    }

    #[test]
    fn csv_embeddings_parse() {
        let path = tmp_dir().join("emb.csv");
        fs::write(&path, "# comment\n1.5,2.0\n3.0,4.0\n").unwrap();
        let m = read_embeddings(&path).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.data(), &[1.5, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_parse_error_names_line() {
        let path = tmp_dir().join("bad.csv");
        fs::write(&path, "1.0,2.0\n1.0,oops\n").unwrap();
        let err = read_embeddings(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn labels_roundtrip_and_errors() {
        let dir = tmp_dir();
        let path = dir.join("labels.txt");
        fs::write(&path, "0\n1\n0\n").unwrap();
        assert_eq!(read_labels(&path).unwrap(), vec![0, 1, 0]);

        fs::write(&path, "a\n").unwrap();
        let err = read_labels(&path).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");

        fs::write(&path, "").unwrap();
        assert_eq!(read_labels(&path).unwrap(), Vec::<usize>::new());

        fs::write(&path, "2\n\n\n").unwrap();
        assert_eq!(read_labels(&path).unwrap(), vec![2]);
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let path = tmp_dir().join("model.sclm");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(
            Projection::TwoLayer {
                d_hidden: 4,
                d_z: 3,
            },
            6,
            &mut rng,
        )
        .unwrap();
        write_checkpoint(&path, &params).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn identity_checkpoint_roundtrip() {
        let path = tmp_dir().join("identity.sclm");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = ModelParams::init(Projection::Identity, 5, &mut rng).unwrap();
        write_checkpoint(&path, &params).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        assert!(back.is_identity());
    }

    #[test]
    fn synth_shapes_labels_and_determinism() {
        let spec = SynthSpec {
            k: 3,
            subspace_dim: 2,
            ambient_dim: 6,
            points_per_cluster: 5,
            noise_sigma: 0.1,
            seed: 9,
        };
        let (x1, labels) = synth_subspace_dataset(&spec).unwrap();
        assert_eq!(x1.shape(), (15, 6));
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
        let (x2, _) = synth_subspace_dataset(&spec).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn noiseless_clusters_have_subspace_rank() {
        let spec = SynthSpec {
            k: 2,
            subspace_dim: 3,
            ambient_dim: 8,
            points_per_cluster: 20,
            noise_sigma: 0.0,
            seed: 5,
        };
        let (x, _) = synth_subspace_dataset(&spec).unwrap();
        for cluster in 0..2 {
            let rows: Vec<usize> = (cluster * 20..(cluster + 1) * 20).collect();
            let sub = x.select_rows(&rows);
            // eigenvalues of X^T X: exactly subspace_dim of them nonzero
            let gram = sub.transpose().matmul(&sub).unwrap();
            let (vals, _) = symmetric_eigendecomp(&gram).unwrap();
            let max = vals.last().copied().unwrap();
            let nonzero = vals.iter().filter(|&&v| v > 1e-10 * max).count();
            assert_eq!(nonzero, 3);
        }
    }

    #[test]
    fn affinity_csv_exact_body() {
        let path = tmp_dir().join("a.csv");
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        export_affinity_csv(&a, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "0,1\n1,0\n");
    }

    #[test]
    fn pca_scatter_aligns_with_dominant_axes() {
        // centered 2-D data with exactly diagonal covariance: all four sign
        // combinations of (+-5, +-0.5), five copies each, so pc1 is the
        // higher-variance coordinate up to sign
        let mut rows = Vec::new();
        for _ in 0..5 {
            for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                rows.push(vec![5.0 * sx, 0.5 * sy]);
            }
        }
        let z = Matrix::from_rows(&rows).unwrap();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let path = tmp_dir().join("scatter.csv");
        export_pca_scatter(&z, &labels, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "pc1,pc2,label");
        let rows: Vec<Vec<f64>> = lines
            .map(|l| {
                l.split(',')
                    .map(|f| f.parse::<f64>().unwrap())
                    .collect()
            })
            .collect();
        assert_eq!(rows.len(), 20);
        // |corr(pc1, x0)| ~ 1
        let xs: Vec<f64> = (0..20).map(|i| z.get(i, 0)).collect();
        let pc1: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let dot: f64 = xs.iter().zip(&pc1).map(|(a, b)| a * b).sum();
        let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let np = pc1.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((dot.abs() / (nx * np) - 1.0).abs() < 1e-8);
        // label column intact
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r[2] as usize, labels[i]);
        }
    }
}
