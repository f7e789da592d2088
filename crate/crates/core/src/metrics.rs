//! SSIM, conditional label fidelity, identity-embedding distance and image
//! grids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ccgan_autograd::{Scalar, Tensor};

use crate::condition::{ConditionSource, ConditionVector};
use crate::data::{make_low_res, LabeledImageSet};
use crate::error::{Error, Result};
use crate::models::{Embedder, ModelBundle};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

const EVAL_CHUNK: usize = 64;

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Valid-mode separable Gaussian filter of an `h x w` plane.
fn filter(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * plane[i * w + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(i + k) * ow + j]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let g = gaussian_taps();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter(a, h, w, &g);
    let mu_b = filter(b, h, w, &g);
    let e_aa = filter(&prod(a, a), h, w, &g);
    let e_bb = filter(&prod(b, b), h, w, &g);
    let e_ab = filter(&prod(a, b), h, w, &g);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean SSIM of two `[C, H, W]` (or `[1, C, H, W]`) images with values in
/// `[-1, 1]`, evaluated on the `[0, 1]` scale and averaged over channels.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::config(format!(
            "ssim of differently shaped images {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (c, h, w) = match *a.shape() {
        [c, h, w] | [1, c, h, w] => (c, h, w),
        _ => return Err(Error::config(format!("ssim needs one image, got {:?}", a.shape()))),
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::config(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let unit = |t: &Tensor<T>| t.data().iter().map(|v| (v.as_f64() + 1.0) / 2.0).collect::<Vec<_>>();
    let (ua, ub) = (unit(a), unit(b));
    let per = h * w;
    let total: f64 = (0..c)
        .map(|k| ssim_plane(&ua[k * per..(k + 1) * per], &ub[k * per..(k + 1) * per], h, w))
        .sum();
    Ok(total / c as f64)
}

/// Per-image SSIM of two equally shaped batches.
pub fn ssim_batch<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<f64>> {
    let (n, _, _, _) = a.dims4("ssim")?;
    (0..n)
        .map(|i| ssim(&a.slice_batch(i, i + 1)?, &b.slice_batch(i, i + 1)?))
        .collect()
}

/// Fraction of `generated` images that `oracle` assigns to their
/// conditioning label.
pub fn label_fidelity(
    generated: &Tensor<f32>,
    labels: &[usize],
    oracle: &Embedder<f32>,
) -> Result<f64> {
    let (n, _, _, _) = generated.dims4("label_fidelity")?;
    if n != labels.len() {
        return Err(Error::config(format!("{n} images but {} labels", labels.len())));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let predicted = oracle.classify(&generated.slice_batch(start, end)?)?;
        hits += predicted
            .iter()
            .zip(&labels[start..end])
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(hits as f64 / n as f64)
}

/// Mean over rows of the mean absolute difference between `[N, e]`
/// embeddings; a single exemplar row is compared with every row.
pub fn mean_embedding_l1(emb: &Tensor<f32>, exemplar: &Tensor<f32>) -> Result<f64> {
    let (n, e) = match *emb.shape() {
        [n, e] => (n, e),
        _ => return Err(Error::config("embeddings must be [N, e]")),
    };
    let broadcast = exemplar.shape() == [1, e];
    if !broadcast && exemplar.shape() != emb.shape() {
        return Err(Error::config(format!(
            "exemplar embeddings {:?} do not match {:?}",
            exemplar.shape(),
            emb.shape()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = emb
        .data()
        .chunks(e)
        .enumerate()
        .map(|(i, row)| {
            let target = if broadcast {
                exemplar.data()
            } else {
                &exemplar.data()[i * e..(i + 1) * e]
            };
            row.iter()
                .zip(target)
                .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
                .sum::<f64>()
                / e as f64
        })
        .sum();
    Ok(total / n as f64)
}

/// Mean embedding L1 between generated images and their exemplar images
/// (one exemplar per image, or a single one for all).
pub fn embedding_distance(
    generated: &Tensor<f32>,
    exemplar: &Tensor<f32>,
    embedder: &Embedder<f32>,
) -> Result<f64> {
    let emb = embed_chunked(embedder, generated)?;
    let target = embed_chunked(embedder, exemplar)?;
    mean_embedding_l1(&emb, &target)
}

fn embed_chunked(embedder: &Embedder<f32>, images: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (n, _, _, _) = images.dims4("embed")?;
    let mut parts = Vec::new();
    for start in (0..n).step_by(EVAL_CHUNK) {
        parts.push(embedder.embed(&images.slice_batch(start, (start + EVAL_CHUNK).min(n))?)?);
    }
    Ok(Tensor::concat_batch(&parts)?)
}

/// Row-major tiling of `[N, C, H, W]` images with one-pixel separators, as a
/// binary PGM (one channel) or PPM (three channels).
pub fn grid_bytes<T: Scalar>(images: &Tensor<T>, rows: usize, cols: usize) -> Result<Vec<u8>> {
    let (n, c, h, w) = images.dims4("grid")?;
    if rows * cols < n || rows == 0 || cols == 0 {
        return Err(Error::config(format!(
            "{rows}x{cols} grid cannot hold {n} images"
        )));
    }
    if c != 1 && c != 3 {
        return Err(Error::config(format!("grids need 1 or 3 channels, got {c}")));
    }
    let gw = (w + 1) * cols - 1;
    let gh = (h + 1) * rows - 1;
    let mut pixels = vec![255u8; gw * gh * c];
    let data = images.data();
    for k in 0..n {
        let (r0, c0) = ((k / cols) * (h + 1), (k % cols) * (w + 1));
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let v = data[((k * c + ch) * h + i) * w + j].as_f64();
                    let byte = ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
                    pixels[((r0 + i) * gw + c0 + j) * c + ch] = byte;
                }
            }
        }
    }
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{gw} {gh}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

pub fn emit_grid<T: Scalar>(images: &Tensor<T>, rows: usize, cols: usize, path: &Path) -> Result<()> {
    let bytes = grid_bytes(images, rows, cols)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// File extension matching [`grid_bytes`] output for `channels`.
pub fn grid_extension(channels: usize) -> &'static str {
    if channels == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// SSIM of cycle reconstructions `G_{Y->X}(G_{X->Y}(x), z)` against `x`.
    pub mean_ssim: f64,
    pub per_image_ssim: Vec<f64>,
    /// Oracle agreement when every input is generated under every class.
    pub label_fidelity: Option<f64>,
    /// Oracle agreement when every input is generated under its own class.
    pub own_label_fidelity: Option<f64>,
    /// Mean per-pixel `|x_rec - x|` on the `[0, 1]` scale.
    pub cycle_l1: f64,
    /// Mean embedding L1 of `G_{Y->X}(y, z)` to the exemplar `x`.
    pub embedding_l1: Option<f64>,
    pub samples: usize,
}

fn opt_text(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_else(|| "n/a".into())
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples\t{}", self.samples);
        let _ = writeln!(s, "reconstruction_ssim_mean\t{:?}", self.mean_ssim);
        let _ = writeln!(s, "cycle_l1\t{:?}", self.cycle_l1);
        let _ = writeln!(s, "label_fidelity\t{}", opt_text(self.label_fidelity));
        let _ = writeln!(s, "own_label_fidelity\t{}", opt_text(self.own_label_fidelity));
        let _ = writeln!(s, "embedding_l1\t{}", opt_text(self.embedding_l1));
        let list: Vec<String> = self.per_image_ssim.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "reconstruction_ssim\t{}", list.join(" "));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::config(format!("malformed report line `{line}`")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::config(format!("report lacks `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::config(format!("report field `{k}` is not a number")))
        };
        let opt = |k: &str| -> Result<Option<f64>> {
            let v = get(k)?;
            if v == "n/a" {
                Ok(None)
            } else {
                v.parse()
                    .map(Some)
                    .map_err(|_| Error::config(format!("report field `{k}` is not a number")))
            }
        };
        let per_image_ssim = get("reconstruction_ssim")?
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::config("bad per-image ssim list"))?;
        Ok(Self {
            samples: num("samples")? as usize,
            mean_ssim: num("reconstruction_ssim_mean")?,
            cycle_l1: num("cycle_l1")?,
            label_fidelity: opt("label_fidelity")?,
            own_label_fidelity: opt("own_label_fidelity")?,
            embedding_l1: opt("embedding_l1")?,
            per_image_ssim,
        })
    }
}

/// Everything [`evaluate`] may measure with.
pub struct EvalInputs<'a> {
    pub source: &'a dyn ConditionSource,
    /// Classifier for label fidelity (class-labelled data only).
    pub oracle: Option<&'a Embedder<f32>>,
    /// Embedder for the identity distance.
    pub embedder: Option<&'a Embedder<f32>>,
    pub low_res_factor: usize,
}

/// Evaluates a trained bundle on a held-out high-res set.
pub fn evaluate(
    bundle: &ModelBundle<f32>,
    test: &LabeledImageSet,
    inputs: &EvalInputs<'_>,
) -> Result<EvalReport> {
    let low = make_low_res(test, inputs.low_res_factor)?;
    let n = test.len();
    let mut per_image_ssim = Vec::with_capacity(n);
    let mut abs_sum = 0.0;
    let mut sweep_hits = 0.0;
    let mut own_hits = 0.0;
    let mut emb_sum = 0.0;
    let classes = match &test.labels {
        crate::data::Labels::Classes { num_classes, .. } => Some(*num_classes),
        _ => None,
    };
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let m = idx.len();
        let x = test.gather(&idx)?;
        let y = low.gather(&idx)?;
        let conds = inputs.source.conditions(test, &idx)?;
        let z = ConditionVector::stack(&conds)?;

        let x_rec = bundle.generate(&bundle.degrade(&x)?, &z)?;
        per_image_ssim.extend(ssim_batch(&x_rec, &x)?);
        abs_sum += x_rec
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs() / 2.0)
            .sum::<f64>();

        if let (Some(oracle), Some(k)) = (inputs.oracle, classes) {
            let own: Vec<usize> = idx.iter().filter_map(|&i| test.labels.class_of(i)).collect();
            own_hits += label_fidelity(&bundle.generate(&y, &z)?, &own, oracle)? * m as f64;
            for class in 0..k {
                let zc = ConditionVector::stack(&vec![ConditionVector::one_hot(class, k)?; m])?;
                let gen = bundle.generate(&y, &zc)?;
                sweep_hits += label_fidelity(&gen, &vec![class; m], oracle)? * m as f64;
            }
        }
        if let Some(embedder) = inputs.embedder {
            let gen = bundle.generate(&y, &z)?;
            emb_sum += embedding_distance(&gen, &x, embedder)? * m as f64;
        }
    }
    let nf = n.max(1) as f64;
    let fidelity_ready = inputs.oracle.is_some() && classes.is_some();
    Ok(EvalReport {
        mean_ssim: per_image_ssim.iter().sum::<f64>() / nf,
        per_image_ssim,
        label_fidelity: fidelity_ready.then(|| sweep_hits / (nf * classes.unwrap_or(1) as f64)),
        own_label_fidelity: fidelity_ready.then(|| own_hits / nf),
        cycle_l1: abs_sum / (test.images.numel().max(1) as f64),
        embedding_l1: inputs.embedder.map(|_| emb_sum / nf),
        samples: n,
    })
}
