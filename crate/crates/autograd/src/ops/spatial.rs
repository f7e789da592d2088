use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, BackwardCtx, Var};
use crate::tensor::Tensor;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

struct InstanceNormBack<T> {
    plane: usize,
    eps: T,
}

impl<T: Scalar> Backward<T> for InstanceNormBack<T> {
    fn name(&self) -> &'static str {
        "instance_norm"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0];
        let len = T::from_f64(self.plane as f64);
        let mut out = Vec::with_capacity(x.numel());
        let planes = x
            .data()
            .chunks(self.plane)
            .zip(ctx.output.data().chunks(self.plane))
            .zip(ctx.grad_out.data().chunks(self.plane));
        for ((xs, ys), gs) in planes {
            let (_, var) = moments(xs);
            let inv_std = T::one() / (var + self.eps).sqrt();
            let g_mean = gs.iter().fold(T::zero(), |a, &g| a + g) / len;
            let gy_mean = gs
                .iter()
                .zip(ys)
                .fold(T::zero(), |a, (&g, &y)| a + g * y)
                / len;
            out.extend(
                gs.iter()
                    .zip(ys)
                    .map(|(&g, &y)| inv_std * (g - g_mean - y * gy_mean)),
            );
        }
        vec![Some(Tensor::new(x.shape(), out).expect("input shape"))]
    }
}

/// Mean and biased variance.
fn moments<T: Scalar>(xs: &[T]) -> (T, T) {
    let len = T::from_f64(xs.len() as f64);
    let mean = xs.iter().fold(T::zero(), |a, &v| a + v) / len;
    let var = xs
        .iter()
        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
        / len;
    (mean, var)
}

struct AvgPoolBack {
    factor: usize,
}

impl<T: Scalar> Backward<T> for AvgPoolBack {
    fn name(&self) -> &'static str {
        "avg_pool2d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0];
        let (n, c, h, w) = x.dims4("avg_pool2d").expect("rank 4");
        let f = self.factor;
        let (oh, ow) = (h / f, w / f);
        let scale = T::one() / T::from_f64((f * f) as f64);
        let g = ctx.grad_out.data();
        let mut out = vec![T::zero(); x.numel()];
        for plane in 0..n * c {
            for y in 0..h {
                for xx in 0..w {
                    out[plane * h * w + y * w + xx] =
                        g[plane * oh * ow + (y / f) * ow + xx / f] * scale;
                }
            }
        }
        vec![Some(Tensor::new(x.shape(), out).expect("input shape"))]
    }
}

/// Per-axis linear interpolation taps: output index -> (i0, i1, w0, w1).
#[derive(Clone)]
struct Taps<T> {
    taps: Vec<(usize, usize, T, T)>,
}

impl<T: Scalar> Taps<T> {
    /// Half-pixel centres, edges clamped (`align_corners = false`).
    fn bilinear(in_len: usize, out_len: usize) -> Self {
        let scale = in_len as f64 / out_len as f64;
        let taps = (0..out_len)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(in_len - 1);
                let i1 = (i0 + 1).min(in_len - 1);
                let frac = src - i0 as f64;
                (i0, i1, T::from_f64(1.0 - frac), T::from_f64(frac))
            })
            .collect();
        Self { taps }
    }

    fn nearest(in_len: usize, out_len: usize) -> Self {
        let taps = (0..out_len)
            .map(|o| {
                let i = (o * in_len / out_len).min(in_len - 1);
                (i, i, T::one(), T::zero())
            })
            .collect();
        Self { taps }
    }
}

fn resample<T: Scalar>(
    data: &[T],
    planes: usize,
    (h, w): (usize, usize),
    ty: &Taps<T>,
    tx: &Taps<T>,
) -> Vec<T> {
    let (oh, ow) = (ty.taps.len(), tx.taps.len());
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &data[p * h * w..][..h * w];
        for &(y0, y1, wy0, wy1) in &ty.taps {
            for &(x0, x1, wx0, wx1) in &tx.taps {
                let top = src[y0 * w + x0] * wx0 + src[y0 * w + x1] * wx1;
                let bottom = src[y1 * w + x0] * wx0 + src[y1 * w + x1] * wx1;
                out.push(top * wy0 + bottom * wy1);
            }
        }
    }
    out
}

struct ResampleBack<T> {
    ty: Taps<T>,
    tx: Taps<T>,
    name: &'static str,
}

impl<T: Scalar> Backward<T> for ResampleBack<T> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0];
        let (n, c, h, w) = x.dims4("resample").expect("rank 4");
        let (oh, ow) = (self.ty.taps.len(), self.tx.taps.len());
        let g = ctx.grad_out.data();
        let mut out = vec![T::zero(); x.numel()];
        for p in 0..n * c {
            let dst = &mut out[p * h * w..][..h * w];
            let src = &g[p * oh * ow..][..oh * ow];
            for (oy, &(y0, y1, wy0, wy1)) in self.ty.taps.iter().enumerate() {
                for (ox, &(x0, x1, wx0, wx1)) in self.tx.taps.iter().enumerate() {
                    let gv = src[oy * ow + ox];
                    dst[y0 * w + x0] = dst[y0 * w + x0] + gv * wy0 * wx0;
                    dst[y0 * w + x1] = dst[y0 * w + x1] + gv * wy0 * wx1;
                    dst[y1 * w + x0] = dst[y1 * w + x0] + gv * wy1 * wx0;
                    dst[y1 * w + x1] = dst[y1 * w + x1] + gv * wy1 * wx1;
                }
            }
        }
        vec![Some(Tensor::new(x.shape(), out).expect("input shape"))]
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Per-sample, per-channel normalisation to zero mean and unit variance
    /// (no affine parameters).
    pub fn instance_norm(&self) -> Result<Var<'t, T>> {
        let eps = T::from_f64(INSTANCE_NORM_EPS);
        let (out, plane) = {
            let x = self.value();
            let (_, _, h, w) = x.dims4("instance_norm")?;
            let plane = h * w;
            let mut out = Vec::with_capacity(x.numel());
            for xs in x.data().chunks(plane) {
                let (mean, var) = moments(xs);
                let inv_std = T::one() / (var + eps).sqrt();
                out.extend(xs.iter().map(|&v| (v - mean) * inv_std));
            }
            (Tensor::new(x.shape(), out)?, plane)
        };
        self.tape()
            .record("instance_norm", out, &[*self], InstanceNormBack { plane, eps })
    }

    /// Non-overlapping `factor x factor` average pooling.
    pub fn avg_pool2d(&self, factor: usize) -> Result<Var<'t, T>> {
        let out = {
            let x = self.value();
            let (n, c, h, w) = x.dims4("avg_pool2d")?;
            if factor == 0 || h % factor != 0 || w % factor != 0 {
                return Err(TensorError::shape(
                    "avg_pool2d",
                    format!("factor {factor} does not divide {h}x{w}"),
                ));
            }
            let (oh, ow) = (h / factor, w / factor);
            let scale = T::one() / T::from_f64((factor * factor) as f64);
            let mut out = vec![T::zero(); n * c * oh * ow];
            for p in 0..n * c {
                let src = &x.data()[p * h * w..][..h * w];
                let dst = &mut out[p * oh * ow..][..oh * ow];
                for y in 0..h {
                    for xx in 0..w {
                        let d = &mut dst[(y / factor) * ow + xx / factor];
                        *d = *d + src[y * w + xx];
                    }
                }
                for d in dst.iter_mut() {
                    *d = *d * scale;
                }
            }
            Tensor::new(&[n, c, oh, ow], out)?
        };
        self.tape()
            .record("avg_pool2d", out, &[*self], AvgPoolBack { factor })
    }

    fn resample_to(
        &self,
        name: &'static str,
        out_h: usize,
        out_w: usize,
        make: fn(usize, usize) -> Taps<T>,
    ) -> Result<Var<'t, T>> {
        let (out, back) = {
            let x = self.value();
            let (n, c, h, w) = x.dims4(name)?;
            if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
                return Err(TensorError::shape(name, "empty spatial extent"));
            }
            let ty = make(h, out_h);
            let tx = make(w, out_w);
            let data = resample(x.data(), n * c, (h, w), &ty, &tx);
            (
                Tensor::new(&[n, c, out_h, out_w], data)?,
                ResampleBack { ty, tx, name },
            )
        };
        self.tape().record(name, out, &[*self], back)
    }

    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Var<'t, T>> {
        self.resample_to("resize_bilinear", out_h, out_w, Taps::bilinear)
    }

    pub fn resize_nearest(&self, out_h: usize, out_w: usize) -> Result<Var<'t, T>> {
        self.resample_to("resize_nearest", out_h, out_w, Taps::nearest)
    }
}
