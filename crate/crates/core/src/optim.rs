//! First-order optimizers, selected by name from the run configuration.

use ccgan_autograd::Tensor;

use crate::config::OptimizerConfig;
use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Updates one network's parameters in place from their gradients.
pub trait Optimizer {
    fn name(&self) -> &'static str;

    /// `grads` lines up with `params` in creation order.
    fn step(&mut self, params: &mut ParamSet<f32>, grads: &[Tensor<f32>]) -> Result<()>;

    /// Named state tensors, for checkpoints.
    fn state(&self) -> Vec<(String, Tensor<f32>)>;

    /// Restores state exported by [`Optimizer::state`].
    fn load_state(&mut self, lookup: &mut dyn FnMut(&str) -> Option<Tensor<f32>>) -> Result<()>;
}

fn check_grads(params: &ParamSet<f32>, grads: &[Tensor<f32>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Training(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Training(format!("gradient shape mismatch for `{name}`")));
        }
    }
    Ok(())
}

fn restore(
    lookup: &mut dyn FnMut(&str) -> Option<Tensor<f32>>,
    name: &str,
    into: &mut Tensor<f32>,
) -> Result<()> {
    let t = lookup(name)
        .ok_or_else(|| Error::CheckpointPayload(format!("missing optimizer state `{name}`")))?;
    if t.shape() != into.shape() {
        return Err(Error::CheckpointPayload(format!(
            "optimizer state `{name}` has shape {:?}, expected {:?}",
            t.shape(),
            into.shape()
        )));
    }
    *into = t;
    Ok(())
}

/// Plain gradient descent, `p -= lr * g`.
pub struct Sgd {
    pub lr: f32,
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, params: &mut ParamSet<f32>, grads: &[Tensor<f32>]) -> Result<()> {
        check_grads(params, grads)?;
        for (p, g) in params.tensors_mut().zip(grads) {
            for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= self.lr * d;
            }
        }
        Ok(())
    }

    fn state(&self) -> Vec<(String, Tensor<f32>)> {
        Vec::new()
    }

    fn load_state(&mut self, _lookup: &mut dyn FnMut(&str) -> Option<Tensor<f32>>) -> Result<()> {
        Ok(())
    }
}

/// Adaptive moment estimation with bias correction.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(lr: f64, cfg: &OptimizerConfig, params: &ParamSet<f32>) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, params: &mut ParamSet<f32>, grads: &[Tensor<f32>]) -> Result<()> {
        check_grads(params, grads)?;
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                let gi = f64::from(gi);
                let mi = b1 * f64::from(md[i]) + (1.0 - b1) * gi;
                let vi = b2 * f64::from(vd[i]) + (1.0 - b2) * gi * gi;
                md[i] = mi as f32;
                vd[i] = vi as f32;
                let update = self.lr * (mi / c1) / ((vi / c2).sqrt() + self.epsilon);
                pd[i] = (f64::from(pd[i]) - update) as f32;
            }
        }
        Ok(())
    }

    fn state(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = vec![("t".to_string(), Tensor::scalar(self.t as f32))];
        for (i, m) in self.m.iter().enumerate() {
            out.push((format!("m.{i}"), m.clone()));
        }
        for (i, v) in self.v.iter().enumerate() {
            out.push((format!("v.{i}"), v.clone()));
        }
        out
    }

    fn load_state(&mut self, lookup: &mut dyn FnMut(&str) -> Option<Tensor<f32>>) -> Result<()> {
        let mut t = Tensor::scalar(0.0f32);
        restore(lookup, "t", &mut t)?;
        self.t = t.item() as u64;
        for (i, m) in self.m.iter_mut().enumerate() {
            restore(lookup, &format!("m.{i}"), m)?;
        }
        for (i, v) in self.v.iter_mut().enumerate() {
            restore(lookup, &format!("v.{i}"), v)?;
        }
        Ok(())
    }
}

type Constructor = fn(f64, &OptimizerConfig, &ParamSet<f32>) -> Box<dyn Optimizer>;

/// Optimizers by name.
pub struct OptimizerRegistry {
    entries: Vec<(&'static str, Constructor)>,
}

impl Default for OptimizerRegistry {
    fn default() -> Self {
        let mut reg = Self {
            entries: Vec::new(),
        };
        reg.register("sgd", |lr, _, _| Box::new(Sgd { lr: lr as f32 }));
        reg.register("adam", |lr, cfg, params| Box::new(Adam::new(lr, cfg, params)));
        reg
    }
}

impl OptimizerRegistry {
    pub fn register(&mut self, name: &'static str, ctor: Constructor) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, ctor));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn create(
        &self,
        lr: f64,
        cfg: &OptimizerConfig,
        params: &ParamSet<f32>,
    ) -> Result<Box<dyn Optimizer>> {
        let (_, ctor) = self
            .entries
            .iter()
            .find(|(n, _)| *n == cfg.kind)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown optimizer `{}` (known: {})",
                    cfg.kind,
                    self.names().join(", ")
                ))
            })?;
        Ok(ctor(lr, cfg, params))
    }
}
