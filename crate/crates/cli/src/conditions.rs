//! Condition specifications given on the command line.

use ccgan_core::condition::{ConditionKind, ConditionRegistry, ConditionSource, ConditionVector, SourceContext};
use ccgan_core::config::Mode;
use ccgan_core::data::{LabeledImageSet, Labels};
use ccgan_core::models::ModelBundle;
use ccgan_core::{Error, Result};

/// One condition item as typed by the user.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionSpec {
    /// Every class, one condition each.
    All,
    /// The condition of the input itself.
    OwnLabel,
    /// The condition carried by dataset sample `N`.
    Sample(usize),
    Class(usize),
    Vector(Vec<f32>),
}

impl std::str::FromStr for ConditionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("cannot read condition `{s}`"));
        if s == "all" {
            Ok(ConditionSpec::All)
        } else if s == "self" {
            Ok(ConditionSpec::OwnLabel)
        } else if let Some(n) = s.strip_prefix('@') {
            n.parse().map(ConditionSpec::Sample).map_err(|_| bad())
        } else if let Some(body) = s.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            body.split_whitespace()
                .map(|v| v.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(ConditionSpec::Vector)
                .map_err(|_| bad())
        } else {
            s.parse().map(ConditionSpec::Class).map_err(|_| bad())
        }
    }
}

/// Resolves [`ConditionSpec`]s against a checkpointed bundle and a dataset.
pub struct Conditioner<'a> {
    bundle: &'a ModelBundle<f32>,
    set: &'a LabeledImageSet,
    source: Box<dyn ConditionSource>,
}

impl<'a> Conditioner<'a> {
    pub fn new(bundle: &'a ModelBundle<f32>, set: &'a LabeledImageSet) -> Result<Self> {
        let source = ConditionRegistry::default().for_mode(
            bundle.mode,
            &set.labels,
            &SourceContext {
                arch: &bundle.arch,
                embedder: bundle.embedder.as_ref(),
            },
        )?;
        Ok(Self { bundle, set, source })
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.set.len() {
            return Err(Error::config(format!(
                "sample index {i} out of range for {} images",
                self.set.len()
            )));
        }
        Ok(())
    }

    fn classes(&self) -> Result<usize> {
        match (&self.set.labels, self.bundle.mode) {
            (Labels::Classes { .. }, Mode::Attribute) => Ok(self.bundle.arch.cond_dim),
            _ => Err(Error::config(format!(
                "class-label conditions need an attribute-mode checkpoint on class-labelled data \
                 (checkpoint mode: {})",
                self.bundle.mode.as_str()
            ))),
        }
    }

    /// Conditions named by `spec` when generating from sample `input`.
    pub fn resolve(&self, spec: &ConditionSpec, input: usize) -> Result<Vec<ConditionVector>> {
        let d = self.bundle.arch.cond_dim;
        match spec {
            ConditionSpec::All => {
                let k = self.classes()?;
                (0..k).map(|c| ConditionVector::one_hot(c, k)).collect()
            }
            ConditionSpec::OwnLabel => {
                self.check_index(input)?;
                self.source.conditions(self.set, &[input])
            }
            ConditionSpec::Sample(i) => {
                self.check_index(*i)?;
                self.source.conditions(self.set, &[*i])
            }
            ConditionSpec::Class(c) => Ok(vec![ConditionVector::one_hot(*c, self.classes()?)?]),
            ConditionSpec::Vector(v) => {
                if v.len() != d {
                    return Err(Error::config(format!(
                        "condition vector has d = {}, checkpoint expects {d}",
                        v.len()
                    )));
                }
                Ok(vec![ConditionVector::new(v.clone(), ConditionKind::Embedding)?])
            }
        }
    }

    /// A spec that must name exactly one condition.
    pub fn resolve_one(&self, spec: &ConditionSpec, input: usize) -> Result<ConditionVector> {
        let mut v = self.resolve(spec, input)?;
        if v.len() != 1 {
            return Err(Error::config("expected a single condition"));
        }
        Ok(v.remove(0))
    }
}
