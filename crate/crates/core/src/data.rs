//! Dataset ingestion, low-res synthesis and unpaired minibatch sampling.

use std::fs;
use std::path::{Path, PathBuf};

use ccgan_autograd::{Tape, Tensor};
use rand::seq::index;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::condition::{mismatched, ConditionSource, ConditionVector};
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// Number of binary flags per row of a face attribute table.
pub const FACE_ATTRIBUTES: usize = 18;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("magic number {found}, expected {expected}")]
    BadMagic { found: u32, expected: u32 },
    #[error("file holds {found} bytes, header promises {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {0} outside 0..=9")]
    LabelRange(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes { values: Vec<usize>, num_classes: usize },
    Attributes { values: Vec<Vec<u8>>, dim: usize },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { values, .. } => values.len(),
            Labels::Attributes { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Classes { values, num_classes } => Labels::Classes {
                values: indices.iter().map(|&i| values[i]).collect(),
                num_classes: *num_classes,
            },
            Labels::Attributes { values, dim } => Labels::Attributes {
                values: indices.iter().map(|&i| values[i].clone()).collect(),
                dim: *dim,
            },
        }
    }

    /// Class index of sample `i`, if these are class labels.
    pub fn class_of(&self, i: usize) -> Option<usize> {
        match self {
            Labels::Classes { values, .. } => Some(values[i]),
            Labels::Attributes { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    HighRes,
    LowRes,
}

/// Images in `[-1, 1]` with one label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    /// `[count, C, H, W]`
    pub images: Tensor<f32>,
    pub labels: Labels,
    pub domain: Domain,
    /// Position of each sample in the originally ingested set.
    pub origin: Vec<usize>,
}

impl LabeledImageSet {
    pub fn new(images: Tensor<f32>, labels: Labels, domain: Domain) -> Result<Self> {
        let (n, _, _, _) = images.dims4("image set")?;
        if n != labels.len() {
            return Err(Error::config(format!(
                "{n} images but {} labels",
                labels.len()
            )));
        }
        Ok(Self {
            images,
            labels,
            domain,
            origin: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(C, H, W)`
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// Stacked images `[indices.len(), C, H, W]`.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        let (c, h, w) = self.image_shape();
        let per = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::config(format!(
                    "sample {i} out of range for a set of {}",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        Ok(Tensor::new(&[indices.len(), c, h, w], data)?)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.gather(indices)?,
            labels: self.labels.subset(indices),
            domain: self.domain,
            origin: indices.iter().map(|&i| self.origin[i]).collect(),
        })
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn header(bytes: &[u8], magic: u32, words: usize) -> std::result::Result<Vec<u32>, IdxError> {
    let head = words * 4;
    if bytes.len() < head {
        return Err(IdxError::Truncated {
            expected: head,
            found: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0).unwrap_or(0);
    if found != magic {
        return Err(IdxError::BadMagic {
            found,
            expected: magic,
        });
    }
    Ok((1..words).map(|k| be_u32(bytes, 4 * k).unwrap_or(0)).collect())
}

/// `(count, rows, cols, pixels)` of an IDX image file.
pub fn parse_idx_images(
    bytes: &[u8],
) -> std::result::Result<(usize, usize, usize, &[u8]), IdxError> {
    let dims = header(bytes, IDX_IMAGES_MAGIC, 4)?;
    let (n, r, c) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let expected = 16 + n * r * c;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok((n, r, c, &bytes[16..expected]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<&[u8], IdxError> {
    let dims = header(bytes, IDX_LABELS_MAGIC, 2)?;
    let expected = 8 + dims[0] as usize;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let labels = &bytes[8..expected];
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(IdxError::LabelRange(bad));
    }
    Ok(labels)
}

/// Byte intensity to `[-1, 1]`.
pub fn byte_to_unit(b: u8) -> f32 {
    (f64::from(b) / 127.5 - 1.0) as f32
}

pub fn idx_from_bytes(image_bytes: &[u8], label_bytes: &[u8]) -> std::result::Result<LabeledImageSet, IdxError> {
    let (n, r, c, pixels) = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let images = Tensor::new(&[n, 1, r, c], pixels.iter().map(|&b| byte_to_unit(b)).collect())
        .expect("length checked against header");
    let labels = Labels::Classes {
        values: labels.iter().map(|&l| usize::from(l)).collect(),
        num_classes: 10,
    };
    Ok(LabeledImageSet::new(images, labels, Domain::HighRes).expect("counts checked"))
}

/// MNIST-style digits from an IDX image file and its label file.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    let blame = |e: &IdxError| match e {
        IdxError::LabelRange(_) => labels_path,
        IdxError::BadMagic { expected, .. } if *expected == IDX_LABELS_MAGIC => labels_path,
        IdxError::Truncated { .. } if parse_idx_images(&images).is_ok() => labels_path,
        _ => images_path,
    };
    idx_from_bytes(&images, &labels).map_err(|e| Error::Idx {
        path: blame(&e).to_path_buf(),
        source: e,
    })
}

/// Rows of `filename f1 .. f18` with flags in {0, 1}.
pub fn parse_attribute_table(text: &str, dim: usize) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let name = fields.next().unwrap_or_default().to_string();
        let flags = fields
            .map(|f| match f {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(format!("line {}: flag `{other}` is not 0 or 1", n + 1)),
            })
            .collect::<std::result::Result<Vec<u8>, String>>()?;
        if flags.len() != dim {
            return Err(format!(
                "line {}: {} flags, expected {dim}",
                n + 1,
                flags.len()
            ));
        }
        rows.push((name, flags));
    }
    Ok(rows)
}

/// Face-format data: a directory of images plus an attribute table naming
/// them. Every image is resized to `size x size` RGB.
pub fn load_face_dir(dir: &Path, table: &Path, size: usize) -> Result<LabeledImageSet> {
    let text = fs::read_to_string(table).map_err(|e| Error::io(table, e))?;
    let rows = parse_attribute_table(&text, FACE_ATTRIBUTES).map_err(|message| Error::Data {
        path: table.to_path_buf(),
        message,
    })?;
    if rows.is_empty() {
        return Err(Error::Data {
            path: table.to_path_buf(),
            message: "attribute table lists no images".into(),
        });
    }
    let side = u32::try_from(size).map_err(|_| Error::config("image size too large"))?;
    let mut data = Vec::with_capacity(rows.len() * 3 * size * size);
    let mut flags = Vec::with_capacity(rows.len());
    for (name, f) in rows {
        let path: PathBuf = dir.join(&name);
        let img = image::open(&path).map_err(|e| Error::Data {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let rgb = image::imageops::resize(
            &img.to_rgb8(),
            side,
            side,
            image::imageops::FilterType::Triangle,
        );
        for ch in 0..3 {
            for p in rgb.pixels() {
                data.push(byte_to_unit(p.0[ch]));
            }
        }
        flags.push(f);
    }
    let n = flags.len();
    LabeledImageSet::new(
        Tensor::new(&[n, 3, size, size], data)?,
        Labels::Attributes {
            values: flags,
            dim: FACE_ATTRIBUTES,
        },
        Domain::HighRes,
    )
}

/// Loads either format: a directory is read as face data with `labels` as
/// its attribute table, a file as IDX.
pub fn load_any(images: &Path, labels: &Path, size: usize) -> Result<LabeledImageSet> {
    if images.is_dir() {
        load_face_dir(images, labels, size)
    } else {
        load_idx(images, labels)
    }
}

const LOW_RES_CHUNK: usize = 512;

/// Average-pools by `factor` and bilinearly upsamples back to the original
/// canvas, tagging the result as low-res.
pub fn make_low_res(set: &LabeledImageSet, factor: usize) -> Result<LabeledImageSet> {
    let (_, h, w) = set.image_shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::config(format!(
            "low-res factor {factor} does not divide {h}x{w}"
        )));
    }
    let mut parts = Vec::new();
    for start in (0..set.len()).step_by(LOW_RES_CHUNK) {
        let end = (start + LOW_RES_CHUNK).min(set.len());
        let tape = Tape::new();
        let x = tape.constant(set.images.slice_batch(start, end)?);
        parts.push(x.avg_pool2d(factor)?.resize_bilinear(h, w)?.to_tensor());
    }
    let images = if parts.is_empty() {
        set.images.clone()
    } else {
        Tensor::concat_batch(&parts)?
    };
    Ok(LabeledImageSet {
        images,
        labels: set.labels.clone(),
        domain: Domain::LowRes,
        origin: set.origin.clone(),
    })
}

/// Disjoint high-res and low-res training pools.
#[derive(Debug, Clone)]
pub struct UnpairedPools {
    pub x: LabeledImageSet,
    pub y: LabeledImageSet,
}

impl UnpairedPools {
    /// Shuffles `set` and gives the first half to X and the second half,
    /// degraded, to Y.
    pub fn split(set: &LabeledImageSet, factor: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if set.len() < 2 {
            return Err(Error::config("need at least two images to form unpaired pools"));
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(rng);
        let half = set.len() / 2;
        let x = set.subset(&order[..half])?;
        let y = make_low_res(&set.subset(&order[half..])?, factor)?;
        Ok(Self { x, y })
    }
}

/// One unpaired minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// High-res samples `[N, C, H, W]`.
    pub x: Tensor<f32>,
    /// Low-res samples, drawn independently.
    pub y: Tensor<f32>,
    /// Conditions matched with `x`.
    pub z: Vec<ConditionVector>,
    /// Mismatched conditions, `z_hat[i] != z[i]`.
    pub z_hat: Vec<ConditionVector>,
    pub x_indices: Vec<usize>,
    pub y_indices: Vec<usize>,
}

impl Batch {
    pub fn z_tensor(&self) -> Result<Tensor<f32>> {
        ConditionVector::stack(&self.z)
    }

    pub fn z_hat_tensor(&self) -> Result<Tensor<f32>> {
        ConditionVector::stack(&self.z_hat)
    }
}

/// Draws `batch` distinct x-samples with their conditions and mismatches,
/// and `batch` distinct y-samples.
pub fn sample_batch(
    pools: &UnpairedPools,
    batch: usize,
    source: &dyn ConditionSource,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    if batch == 0 || batch > pools.x.len() || batch > pools.y.len() {
        return Err(Error::config(format!(
            "batch size {batch} does not fit pools of {} and {} images",
            pools.x.len(),
            pools.y.len()
        )));
    }
    let x_indices = index::sample(rng, pools.x.len(), batch).into_vec();
    let y_indices = index::sample(rng, pools.y.len(), batch).into_vec();
    let z = source.conditions(&pools.x, &x_indices)?;
    let z_hat = mismatched(source, &z, &pools.x, rng)?;
    Ok(Batch {
        x: pools.x.gather(&x_indices)?,
        y: pools.y.gather(&y_indices)?,
        z,
        z_hat,
        x_indices,
        y_indices,
    })
}
