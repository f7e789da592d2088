//! Generators, discriminators and the auxiliary embedder.
//!
//! Condition vectors enter `G_{Y->X}` as constant feature maps concatenated
//! with the input image, and enter `D_X` as constant maps concatenated with
//! the `conv1` activations. `G_{X->Y}` and `D_Y` are unconditional.

use ccgan_autograd::{Scalar, Tape, Tensor, Var};

use crate::config::{ArchConfig, Mode};
use crate::error::{Error, Result};
use crate::params::{Bound, Cursor, Initializer, ParamSet};

pub const LEAKY_SLOPE: f64 = 0.2;

fn conv<'t, T: Scalar>(
    p: &mut Cursor<'_, 't, T>,
    x: Var<'t, T>,
    stride: usize,
    pad: usize,
) -> Result<Var<'t, T>> {
    let (w, b) = (p.take(), p.take());
    Ok(x.conv2d(&w, &b, stride, pad)?)
}

fn deconv<'t, T: Scalar>(p: &mut Cursor<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let (w, b) = (p.take(), p.take());
    Ok(x.conv_transpose2d(&w, &b, 2, 1)?)
}

fn condition_dim_check<T: Scalar>(expected: usize, z: &Var<'_, T>) -> Result<()> {
    let shape = z.shape();
    if shape.len() != 2 || shape[1] != expected {
        return Err(Error::config(format!(
            "condition has shape {shape:?}, network expects [N, {expected}]"
        )));
    }
    Ok(())
}

/// Resolution-preserving encoder / residual trunk / decoder generator with a
/// tanh head. When `cond_dim > 0` the condition maps are concatenated with the
/// input image before the first convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T: Scalar> {
    pub image_channels: usize,
    pub cond_dim: usize,
    pub base: usize,
    pub res_blocks: usize,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new(
        prefix: &str,
        image_channels: usize,
        cond_dim: usize,
        base: usize,
        res_blocks: usize,
        init: &mut Initializer,
    ) -> Self {
        let mut params = ParamSet::new();
        let (c, b) = (image_channels, base);
        let mut conv_layer = |name: String, cout: usize, cin: usize, k: usize| {
            params.push(format!("{name}.weight"), init.weight(&[cout, cin, k, k]));
            params.push(format!("{name}.bias"), Tensor::zeros(&[cout]));
        };
        conv_layer(format!("{prefix}.enc1"), b, c + cond_dim, 3);
        conv_layer(format!("{prefix}.enc2"), 2 * b, b, 3);
        for r in 0..res_blocks {
            conv_layer(format!("{prefix}.res{r}.a"), 2 * b, 2 * b, 3);
            conv_layer(format!("{prefix}.res{r}.b"), 2 * b, 2 * b, 3);
        }
        // transposed kernels are [Cin, Cout, k, k]
        let mut deconv_layer = |name: String, cin: usize, cout: usize| {
            params.push(format!("{name}.weight"), init.weight(&[cin, cout, 4, 4]));
            params.push(format!("{name}.bias"), Tensor::zeros(&[cout]));
        };
        deconv_layer(format!("{prefix}.dec1"), 2 * b, b);
        deconv_layer(format!("{prefix}.dec2"), b, b);
        params.push(format!("{prefix}.out.weight"), init.weight(&[c, b, 3, 3]));
        params.push(format!("{prefix}.out.bias"), Tensor::zeros(&[c]));
        Self {
            image_channels,
            cond_dim,
            base,
            res_blocks,
            params,
        }
    }

    /// Closed-form parameter count for this architecture.
    pub fn analytic_param_count(&self) -> usize {
        let (c, d, b, r) = (self.image_channels, self.cond_dim, self.base, self.res_blocks);
        let enc = (b * (c + d) * 9 + b) + (2 * b * b * 9 + 2 * b);
        let trunk = r * 2 * (4 * b * b * 9 + 2 * b);
        let dec = (2 * b * b * 16 + b) + (b * b * 16 + b);
        let out = c * b * 9 + c;
        enc + trunk + dec + out
    }

    /// Input to the first convolution: the image, followed by the replicated
    /// condition maps when the generator is conditional.
    pub fn conditioned_input<'t>(
        &self,
        image: Var<'t, T>,
        cond: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        let (_, c, h, w) = image.value().dims4("generator")?;
        if c != self.image_channels {
            return Err(Error::config(format!(
                "generator expects {} image channels, got {c}",
                self.image_channels
            )));
        }
        match (self.cond_dim, cond) {
            (0, None) => Ok(image),
            (0, Some(_)) => Err(Error::config("unconditional generator was given a condition")),
            (_, None) => Err(Error::config("conditional generator needs a condition vector")),
            (d, Some(z)) => {
                condition_dim_check(d, &z)?;
                Ok(image.concat_channels(&z.replicate_condition(h, w)?)?)
            }
        }
    }

    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        image: Var<'t, T>,
        cond: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        let mut p = bound.cursor();
        let x = self.conditioned_input(image, cond)?;
        let x = conv(&mut p, x, 2, 1)?.instance_norm()?.relu()?;
        let mut x = conv(&mut p, x, 2, 1)?.instance_norm()?.relu()?;
        for _ in 0..self.res_blocks {
            let h = conv(&mut p, x, 1, 1)?.instance_norm()?.relu()?;
            let h = conv(&mut p, h, 1, 1)?.instance_norm()?;
            x = x.add(&h)?;
        }
        let x = deconv(&mut p, x)?.instance_norm()?.relu()?;
        let x = deconv(&mut p, x)?.instance_norm()?.relu()?;
        let out = conv(&mut p, x, 1, 1)?.tanh()?;
        debug_assert!(p.finished());
        Ok(out)
    }
}

/// Patch discriminator: `conv1` (stride 2), optional condition concatenation,
/// three more stride-2 convolutions and a one-channel score map whose mean is
/// squashed by a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T: Scalar> {
    pub image_channels: usize,
    pub cond_dim: usize,
    pub base: usize,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(
        prefix: &str,
        image_channels: usize,
        cond_dim: usize,
        base: usize,
        init: &mut Initializer,
    ) -> Self {
        let mut params = ParamSet::new();
        let b = base;
        let mut conv_layer = |name: &str, cout: usize, cin: usize| {
            params.push(format!("{prefix}.{name}.weight"), init.weight(&[cout, cin, 3, 3]));
            params.push(format!("{prefix}.{name}.bias"), Tensor::zeros(&[cout]));
        };
        conv_layer("conv1", b, image_channels);
        conv_layer("conv2", 2 * b, b + cond_dim);
        conv_layer("conv3", 4 * b, 2 * b);
        conv_layer("conv4", 4 * b, 4 * b);
        conv_layer("head", 1, 4 * b);
        Self {
            image_channels,
            cond_dim,
            base,
            params,
        }
    }

    pub fn analytic_param_count(&self) -> usize {
        let (c, d, b) = (self.image_channels, self.cond_dim, self.base);
        (b * c * 9 + b)
            + (2 * b * (b + d) * 9 + 2 * b)
            + (4 * b * 2 * b * 9 + 4 * b)
            + (16 * b * b * 9 + 4 * b)
            + (4 * b * 9 + 1)
    }

    /// `conv1` activations with the condition maps appended, i.e. the input
    /// of `conv2`.
    pub fn conditioned_features<'t>(
        &self,
        p: &mut Cursor<'_, 't, T>,
        image: Var<'t, T>,
        cond: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        let (_, c, _, _) = image.value().dims4("discriminator")?;
        if c != self.image_channels {
            return Err(Error::config(format!(
                "discriminator expects {} image channels, got {c}",
                self.image_channels
            )));
        }
        let h = conv(p, image, 2, 1)?.leaky_relu(LEAKY_SLOPE)?;
        match (self.cond_dim, cond) {
            (0, None) => Ok(h),
            (0, Some(_)) => Err(Error::config("unconditional discriminator was given a condition")),
            (_, None) => Err(Error::config("conditional discriminator needs a condition vector")),
            (d, Some(z)) => {
                condition_dim_check(d, &z)?;
                let (_, _, fh, fw) = h.value().dims4("discriminator")?;
                Ok(h.concat_channels(&z.replicate_condition(fh, fw)?)?)
            }
        }
    }

    /// Per-sample probability that `image` (with `cond`) is real, shape `[N]`.
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        image: Var<'t, T>,
        cond: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        let mut p = bound.cursor();
        let h = self.conditioned_features(&mut p, image, cond)?;
        let h = conv(&mut p, h, 2, 1)?.instance_norm()?.leaky_relu(LEAKY_SLOPE)?;
        let h = conv(&mut p, h, 2, 1)?.instance_norm()?.leaky_relu(LEAKY_SLOPE)?;
        let h = conv(&mut p, h, 2, 1)?.leaky_relu(LEAKY_SLOPE)?;
        let logits = conv(&mut p, h, 1, 1)?;
        debug_assert!(p.finished());
        Ok(logits.mean_per_sample()?.sigmoid()?)
    }
}

/// Small convolutional classifier whose tanh hidden layer is the identity
/// embedding. Used frozen: as identity-condition source, as the auxiliary
/// identity discriminator, and (separately seeded) as the label-fidelity
/// oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder<T: Scalar> {
    pub image_channels: usize,
    pub image_size: usize,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub params: ParamSet<T>,
}

const EMBED_C1: usize = 16;
const EMBED_C2: usize = 32;

impl<T: Scalar> Embedder<T> {
    pub fn new(arch: &ArchConfig, init: &mut Initializer) -> Self {
        let (c, s, e, k) = (
            arch.image_channels,
            arch.image_size,
            arch.embed_dim,
            arch.num_classes,
        );
        let flat = EMBED_C2 * (s / 4) * (s / 4);
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let mut params = ParamSet::new();
        params.push("embedder.conv1.weight", init.normal(&[EMBED_C1, c, 3, 3], he(c * 9)));
        params.push("embedder.conv1.bias", Tensor::zeros(&[EMBED_C1]));
        params.push(
            "embedder.conv2.weight",
            init.normal(&[EMBED_C2, EMBED_C1, 3, 3], he(EMBED_C1 * 9)),
        );
        params.push("embedder.conv2.bias", Tensor::zeros(&[EMBED_C2]));
        params.push("embedder.embed.weight", init.normal(&[e, flat], he(flat)));
        params.push("embedder.embed.bias", Tensor::zeros(&[e]));
        params.push("embedder.head.weight", init.normal(&[k, e], he(e)));
        params.push("embedder.head.bias", Tensor::zeros(&[k]));
        Self {
            image_channels: c,
            image_size: s,
            embed_dim: e,
            num_classes: k,
            params,
        }
    }

    /// `(embedding [N, e], logits [N, classes])`
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        image: Var<'t, T>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let (_, c, h, w) = image.value().dims4("embedder")?;
        if c != self.image_channels || h != self.image_size || w != self.image_size {
            return Err(Error::config(format!(
                "embedder expects {}x{}x{} images, got {c}x{h}x{w}",
                self.image_channels, self.image_size, self.image_size
            )));
        }
        let mut p = bound.cursor();
        let x = conv(&mut p, image, 1, 1)?.relu()?.avg_pool2d(2)?;
        let x = conv(&mut p, x, 1, 1)?.relu()?.avg_pool2d(2)?.flatten()?;
        let (w1, b1) = (p.take(), p.take());
        let emb = x.linear(&w1, &b1)?.tanh()?;
        let (w2, b2) = (p.take(), p.take());
        let logits = emb.linear(&w2, &b2)?;
        Ok((emb, logits))
    }

    /// Embedding of a batch with frozen parameters, outside any caller tape.
    pub fn embed(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let (emb, _) = self.forward(&bound, tape.constant(images.clone()))?;
        Ok(emb.to_tensor())
    }

    /// Predicted class per image.
    pub fn classify(&self, images: &Tensor<T>) -> Result<Vec<usize>> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let (_, logits) = self.forward(&bound, tape.constant(images.clone()))?;
        let logits = logits.to_tensor();
        Ok(logits
            .data()
            .chunks(self.num_classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }
}

/// All networks of a conditional CycleGAN run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T: Scalar> {
    pub arch: ArchConfig,
    pub mode: Mode,
    /// High-res to low-res, unconditional.
    pub g_xy: Generator<T>,
    /// Low-res plus condition to high-res.
    pub g_yx: Generator<T>,
    /// Conditional discriminator on the high-res domain.
    pub d_x: Discriminator<T>,
    /// Unconditional discriminator on the low-res domain.
    pub d_y: Discriminator<T>,
    /// Frozen embedder; required in identity mode.
    pub embedder: Option<Embedder<T>>,
}

/// Which trainable network, in update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Net {
    DY,
    DX,
    GXY,
    GYX,
}

impl Net {
    pub const ALL: [Net; 4] = [Net::DY, Net::DX, Net::GXY, Net::GYX];

    pub fn name(self) -> &'static str {
        match self {
            Net::DY => "d_y",
            Net::DX => "d_x",
            Net::GXY => "g_xy",
            Net::GYX => "g_yx",
        }
    }
}

impl<T: Scalar> ModelBundle<T> {
    /// Fresh networks with N(0, 0.02) weights and zero biases. In identity
    /// mode the condition length is the embedding width.
    pub fn init(seed: u64, mode: Mode, arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut arch = arch.clone();
        if mode == Mode::Identity {
            arch.cond_dim = arch.embed_dim;
        }
        let mut init = Initializer::new(seed);
        let c = arch.image_channels;
        let g_xy = Generator::new("g_xy", c, 0, arch.gen_base, arch.res_blocks, &mut init);
        let g_yx = Generator::new(
            "g_yx",
            c,
            arch.cond_dim,
            arch.gen_base,
            arch.res_blocks,
            &mut init,
        );
        let d_x = Discriminator::new("d_x", c, arch.cond_dim, arch.disc_base, &mut init);
        let d_y = Discriminator::new("d_y", c, 0, arch.disc_base, &mut init);
        Ok(Self {
            arch,
            mode,
            g_xy,
            g_yx,
            d_x,
            d_y,
            embedder: None,
        })
    }

    pub fn with_embedder(mut self, embedder: Embedder<T>) -> Result<Self> {
        if self.mode == Mode::Identity && embedder.embed_dim != self.arch.cond_dim {
            return Err(Error::config(format!(
                "embedder width {} does not match condition length {}",
                embedder.embed_dim, self.arch.cond_dim
            )));
        }
        self.embedder = Some(embedder);
        Ok(self)
    }

    pub fn params(&self, net: Net) -> &ParamSet<T> {
        match net {
            Net::DY => &self.d_y.params,
            Net::DX => &self.d_x.params,
            Net::GXY => &self.g_xy.params,
            Net::GYX => &self.g_yx.params,
        }
    }

    pub fn params_mut(&mut self, net: Net) -> &mut ParamSet<T> {
        match net {
            Net::DY => &mut self.d_y.params,
            Net::DX => &mut self.d_x.params,
            Net::GXY => &mut self.g_xy.params,
            Net::GYX => &mut self.g_yx.params,
        }
    }

    pub fn param_count(&self) -> usize {
        Net::ALL.iter().map(|&n| self.params(n).numel()).sum()
    }

    /// `x_hat = G_{Y->X}(y, z)` outside any training tape.
    pub fn generate(&self, y: &Tensor<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let bound = self.g_yx.params.bind(&tape, false);
        let out = self
            .g_yx
            .forward(&bound, tape.constant(y.clone()), Some(tape.constant(z.clone())))?;
        Ok(out.to_tensor())
    }

    /// `y_hat = G_{X->Y}(x)` outside any training tape.
    pub fn degrade(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let bound = self.g_xy.params.bind(&tape, false);
        Ok(self.g_xy.forward(&bound, tape.constant(x.clone()), None)?.to_tensor())
    }

    /// `D_X(x, z)` scores outside any training tape.
    pub fn score_x(&self, x: &Tensor<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let bound = self.d_x.params.bind(&tape, false);
        let out = self
            .d_x
            .forward(&bound, tape.constant(x.clone()), Some(tape.constant(z.clone())))?;
        Ok(out.to_tensor())
    }
}
