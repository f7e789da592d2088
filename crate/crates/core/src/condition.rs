//! Condition vectors `z` and the interchangeable sources that produce them.
//!
//! Each source is registered by name; the run mode and the label kind of
//! the dataset pick one at runtime.

use ccgan_autograd::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ArchConfig, Mode};
use crate::data::{LabeledImageSet, Labels};
use crate::error::{Error, Result};
use crate::models::Embedder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    OneHot,
    Binary,
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVector {
    values: Vec<f32>,
    kind: ConditionKind,
}

impl ConditionVector {
    pub fn new(values: Vec<f32>, kind: ConditionKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("condition vector must have d >= 1"));
        }
        let ok = match kind {
            ConditionKind::OneHot => {
                values.iter().all(|&v| v == 0.0 || v == 1.0)
                    && values.iter().filter(|&&v| v == 1.0).count() == 1
            }
            ConditionKind::Binary => values.iter().all(|&v| v == 0.0 || v == 1.0),
            ConditionKind::Embedding => values.iter().all(|v| v.is_finite()),
        };
        if !ok {
            return Err(Error::config(format!("invalid {kind:?} condition {values:?}")));
        }
        Ok(Self { values, kind })
    }

    pub fn one_hot(label: usize, num_classes: usize) -> Result<Self> {
        if label >= num_classes {
            return Err(Error::config(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        let mut v = vec![0.0; num_classes];
        v[label] = 1.0;
        Self::new(v, ConditionKind::OneHot)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn kind(&self) -> ConditionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `(1 - t) * a + t * b`; endpoints reproduce `a` and `b` exactly.
    pub fn lerp(a: &[f32], b: &[f32], t: f64) -> Vec<f32> {
        if t == 0.0 {
            return a.to_vec();
        }
        if t == 1.0 {
            return b.to_vec();
        }
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                if x == y {
                    x
                } else {
                    ((1.0 - t) * x as f64 + t * y as f64) as f32
                }
            })
            .collect()
    }

    /// `[N, d]` batch tensor.
    pub fn stack(conds: &[ConditionVector]) -> Result<Tensor<f32>> {
        let d = conds
            .first()
            .ok_or_else(|| Error::config("empty condition list"))?
            .dim();
        let mut data = Vec::with_capacity(conds.len() * d);
        for c in conds {
            if c.dim() != d {
                return Err(Error::config("condition vectors of differing length"));
            }
            data.extend_from_slice(&c.values);
        }
        Ok(Tensor::new(&[conds.len(), d], data)?)
    }
}

/// Produces the condition `z` attached to high-res samples.
pub trait ConditionSource {
    fn name(&self) -> &'static str;

    fn kind(&self) -> ConditionKind;

    fn dim(&self) -> usize;

    /// Conditions of the samples `indices` of `set`.
    fn conditions(&self, set: &LabeledImageSet, indices: &[usize]) -> Result<Vec<ConditionVector>>;

    /// Some condition different from `z`, used when no other sample of the
    /// batch carries one.
    fn other_than(
        &self,
        z: &ConditionVector,
        set: &LabeledImageSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<ConditionVector>;
}

/// For each sample, a condition taken uniformly from the other samples of the
/// batch whose condition differs from its own; [`ConditionSource::other_than`]
/// only if none differs.
pub fn mismatched(
    source: &dyn ConditionSource,
    conds: &[ConditionVector],
    set: &LabeledImageSet,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ConditionVector>> {
    conds
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let candidates: Vec<usize> = (0..conds.len())
                .filter(|&j| j != i && conds[j] != *z)
                .collect();
            if candidates.is_empty() {
                source.other_than(z, set, rng)
            } else {
                Ok(conds[candidates[rng.random_range(0..candidates.len())]].clone())
            }
        })
        .collect()
}

pub struct OneHotLabels {
    pub num_classes: usize,
}

impl ConditionSource for OneHotLabels {
    fn name(&self) -> &'static str {
        "onehot"
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::OneHot
    }

    fn dim(&self) -> usize {
        self.num_classes
    }

    fn conditions(&self, set: &LabeledImageSet, indices: &[usize]) -> Result<Vec<ConditionVector>> {
        let Labels::Classes { values, .. } = &set.labels else {
            return Err(Error::config("one-hot conditions need class labels"));
        };
        indices
            .iter()
            .map(|&i| ConditionVector::one_hot(values[i], self.num_classes))
            .collect()
    }

    fn other_than(
        &self,
        z: &ConditionVector,
        _set: &LabeledImageSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<ConditionVector> {
        let current = z.values().iter().position(|&v| v == 1.0).unwrap_or(0);
        let shift = rng.random_range(1..self.num_classes.max(2));
        ConditionVector::one_hot((current + shift) % self.num_classes, self.num_classes)
    }
}

pub struct BinaryAttributes {
    pub dim: usize,
}

impl ConditionSource for BinaryAttributes {
    fn name(&self) -> &'static str {
        "attributes"
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Binary
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn conditions(&self, set: &LabeledImageSet, indices: &[usize]) -> Result<Vec<ConditionVector>> {
        let Labels::Attributes { values, dim } = &set.labels else {
            return Err(Error::config("attribute conditions need attribute labels"));
        };
        if *dim != self.dim {
            return Err(Error::config(format!(
                "dataset has {dim} attributes, model expects {}",
                self.dim
            )));
        }
        indices
            .iter()
            .map(|&i| {
                let v = values[i].iter().map(|&b| f32::from(b)).collect();
                ConditionVector::new(v, ConditionKind::Binary)
            })
            .collect()
    }

    fn other_than(
        &self,
        z: &ConditionVector,
        _set: &LabeledImageSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<ConditionVector> {
        let mut v = z.values().to_vec();
        let bit = rng.random_range(0..v.len());
        v[bit] = 1.0 - v[bit];
        ConditionVector::new(v, ConditionKind::Binary)
    }
}

/// Identity features from the frozen embedder.
pub struct IdentityEmbedding {
    pub embedder: Embedder<f32>,
}

impl ConditionSource for IdentityEmbedding {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn kind(&self) -> ConditionKind {
        ConditionKind::Embedding
    }

    fn dim(&self) -> usize {
        self.embedder.embed_dim
    }

    fn conditions(&self, set: &LabeledImageSet, indices: &[usize]) -> Result<Vec<ConditionVector>> {
        let images = set.gather(indices)?;
        let emb = self.embedder.embed(&images)?;
        emb.data()
            .chunks(self.dim())
            .map(|row| ConditionVector::new(row.to_vec(), ConditionKind::Embedding))
            .collect()
    }

    fn other_than(
        &self,
        z: &ConditionVector,
        set: &LabeledImageSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<ConditionVector> {
        for _ in 0..64 {
            let j = rng.random_range(0..set.len());
            let cand = self.conditions(set, &[j])?.remove(0);
            if cand != *z {
                return Ok(cand);
            }
        }
        Err(Error::Training(
            "could not find an image with a different identity embedding".into(),
        ))
    }
}

/// Everything a source constructor may need.
pub struct SourceContext<'a> {
    pub arch: &'a ArchConfig,
    pub embedder: Option<&'a Embedder<f32>>,
}

type Constructor = fn(&SourceContext<'_>) -> Result<Box<dyn ConditionSource>>;

/// Condition sources by name.
pub struct ConditionRegistry {
    entries: Vec<(&'static str, Constructor)>,
}

impl Default for ConditionRegistry {
    fn default() -> Self {
        let mut reg = Self {
            entries: Vec::new(),
        };
        reg.register("onehot", |ctx| {
            Ok(Box::new(OneHotLabels {
                num_classes: ctx.arch.cond_dim,
            }))
        });
        reg.register("attributes", |ctx| {
            Ok(Box::new(BinaryAttributes {
                dim: ctx.arch.cond_dim,
            }))
        });
        reg.register("identity", |ctx| {
            let embedder = ctx.embedder.ok_or_else(|| {
                Error::config("identity conditions need a pretrained embedder (embedder.checkpoint)")
            })?;
            Ok(Box::new(IdentityEmbedding {
                embedder: embedder.clone(),
            }))
        });
        reg
    }
}

impl ConditionRegistry {
    pub fn register(&mut self, name: &'static str, ctor: Constructor) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, ctor));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn create(&self, name: &str, ctx: &SourceContext<'_>) -> Result<Box<dyn ConditionSource>> {
        let (_, ctor) = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::config(format!("unknown condition source `{name}`")))?;
        ctor(ctx)
    }

    /// Source implied by the run mode and the dataset's label kind.
    pub fn for_mode(
        &self,
        mode: Mode,
        labels: &Labels,
        ctx: &SourceContext<'_>,
    ) -> Result<Box<dyn ConditionSource>> {
        let name = match (mode, labels) {
            (Mode::Identity, _) => "identity",
            (Mode::Attribute, Labels::Classes { .. }) => "onehot",
            (Mode::Attribute, Labels::Attributes { .. }) => "attributes",
        };
        let source = self.create(name, ctx)?;
        if source.dim() != ctx.arch.cond_dim {
            return Err(Error::config(format!(
                "condition source `{name}` yields d = {}, model expects {}",
                source.dim(),
                ctx.arch.cond_dim
            )));
        }
        Ok(source)
    }
}
