//! 2-D convolution and transposed convolution lowered to GEMM via im2col.
//!
//! The whole batch is unfolded into a single `[C*kh*kw, N*P]` column matrix
//! so each layer costs one matrix product per direction.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, BackwardCtx, Var};
use crate::tensor::Tensor;

/// Sliding-window geometry over a `C x H x W` image producing `out_h x out_w`
/// window positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Window {
    fn new(
        op: &'static str,
        (channels, height, width): (usize, usize, usize),
        (kh, kw): (usize, usize),
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(TensorError::shape(op, "stride must be at least 1"));
        }
        if kh == 0 || kw == 0 || kh > height + 2 * pad || kw > width + 2 * pad {
            return Err(TensorError::shape(
                op,
                format!("kernel {kh}x{kw} does not fit {height}x{width} with pad {pad}"),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            pad,
            out_h: (height + 2 * pad - kh) / stride + 1,
            out_w: (width + 2 * pad - kw) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Output positions `lo..hi` along one axis whose tap `k` lands inside
    /// an input of extent `size`.
    fn valid(&self, out: usize, k: usize, size: usize) -> (usize, usize) {
        let (s, pad) = (self.stride, self.pad);
        let lo = if pad > k { (pad - k).div_ceil(s) } else { 0 };
        let hi = if size + pad > k {
            ((size + pad - k - 1) / s + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Unfolds `images` (`n` stacked `C x H x W` images) into
    /// `[rows, n * positions]`.
    fn im2col<T: Scalar>(&self, images: &[T], n: usize) -> Vec<T> {
        let p = self.positions();
        let cols = n * p;
        let plane = self.height * self.width;
        let mut out = vec![T::zero(); self.rows() * cols];
        for c in 0..self.channels {
            for i in 0..self.kh {
                let (y0, y1) = self.valid(self.out_h, i, self.height);
                for j in 0..self.kw {
                    let (x0, x1) = self.valid(self.out_w, j, self.width);
                    let row = (c * self.kh + i) * self.kw + j;
                    let dst_row = &mut out[row * cols..(row + 1) * cols];
                    for b in 0..n {
                        let src = &images[(b * self.channels + c) * plane..][..plane];
                        for oy in y0..y1 {
                            let iy = oy * self.stride + i - self.pad;
                            let src_row = &src[iy * self.width..][..self.width];
                            let dst = &mut dst_row[b * p + oy * self.out_w..][..self.out_w];
                            if self.stride == 1 {
                                let ix0 = x0 + j - self.pad;
                                dst[x0..x1].copy_from_slice(&src_row[ix0..ix0 + x1 - x0]);
                            } else {
                                for ox in x0..x1 {
                                    dst[ox] = src_row[ox * self.stride + j - self.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`Window::im2col`]: folds columns back, summing overlaps.
    fn col2im<T: Scalar>(&self, cols_data: &[T], n: usize) -> Vec<T> {
        let p = self.positions();
        let cols = n * p;
        let plane = self.height * self.width;
        let mut out = vec![T::zero(); n * self.channels * plane];
        for c in 0..self.channels {
            for i in 0..self.kh {
                let (y0, y1) = self.valid(self.out_h, i, self.height);
                for j in 0..self.kw {
                    let (x0, x1) = self.valid(self.out_w, j, self.width);
                    let row = (c * self.kh + i) * self.kw + j;
                    let src_row = &cols_data[row * cols..(row + 1) * cols];
                    for b in 0..n {
                        let dst = &mut out[(b * self.channels + c) * plane..][..plane];
                        for oy in y0..y1 {
                            let iy = oy * self.stride + i - self.pad;
                            let dst_row = &mut dst[iy * self.width..][..self.width];
                            let src = &src_row[b * p + oy * self.out_w..][..self.out_w];
                            for ox in x0..x1 {
                                let d = &mut dst_row[ox * self.stride + j - self.pad];
                                *d = *d + src[ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// `[N, C, P] -> [C, N*P]`
fn batch_to_channel_major<T: Scalar>(data: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for b in 0..n {
        for ch in 0..c {
            out[ch * n * p + b * p..][..p].copy_from_slice(&data[(b * c + ch) * p..][..p]);
        }
    }
    out
}

/// `[C, N*P] -> [N, C, P]`, optionally adding a per-channel bias.
fn channel_major_to_batch<T: Scalar>(
    data: &[T],
    n: usize,
    c: usize,
    p: usize,
    bias: Option<&[T]>,
) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for b in 0..n {
        for ch in 0..c {
            let add = bias.map_or(T::zero(), |bs| bs[ch]);
            let src = &data[ch * n * p + b * p..][..p];
            for (d, &s) in out[(b * c + ch) * p..][..p].iter_mut().zip(src) {
                *d = s + add;
            }
        }
    }
    out
}

fn channel_sums<T: Scalar>(data: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c];
    for b in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            *o = data[(b * c + ch) * p..][..p]
                .iter()
                .fold(*o, |acc, &v| acc + v);
        }
    }
    out
}

struct Conv2dBack {
    window: Window,
    batch: usize,
    out_channels: usize,
}

impl<T: Scalar> Backward<T> for Conv2dBack {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
        let win = &self.window;
        let (n, co, p, k) = (self.batch, self.out_channels, win.positions(), win.rows());
        let g = batch_to_channel_major(ctx.grad_out.data(), n, co, p);

        let gx = ctx.needs[0].then(|| {
            let mut dcol = vec![T::zero(); k * n * p];
            T::gemm(k, co, n * p, w.data(), true, &g, false, T::zero(), &mut dcol);
            Tensor::new(x.shape(), win.col2im(&dcol, n)).expect("input shape")
        });
        let gw = ctx.needs[1].then(|| {
            let col = win.im2col(x.data(), n);
            let mut dw = vec![T::zero(); co * k];
            T::gemm(co, n * p, k, &g, false, &col, true, T::zero(), &mut dw);
            Tensor::new(w.shape(), dw).expect("kernel shape")
        });
        let gb = ctx.needs[2].then(|| {
            Tensor::new(&[co], channel_sums(ctx.grad_out.data(), n, co, p)).expect("bias shape")
        });
        vec![gx, gw, gb]
    }
}

struct ConvTranspose2dBack {
    /// Window over the *output* image whose positions are the input pixels.
    window: Window,
    batch: usize,
    in_channels: usize,
}

impl<T: Scalar> Backward<T> for ConvTranspose2dBack {
    fn name(&self) -> &'static str {
        "conv_transpose2d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
        let win = &self.window;
        let (n, ci, p, k) = (self.batch, self.in_channels, win.positions(), win.rows());
        let gcol = win.im2col(ctx.grad_out.data(), n);

        let gx = ctx.needs[0].then(|| {
            let mut dx = vec![T::zero(); ci * n * p];
            T::gemm(ci, k, n * p, w.data(), false, &gcol, false, T::zero(), &mut dx);
            let dx = channel_major_to_batch(&dx, n, ci, p, None);
            Tensor::new(x.shape(), dx).expect("input shape")
        });
        let gw = ctx.needs[1].then(|| {
            let xr = batch_to_channel_major(x.data(), n, ci, p);
            let mut dw = vec![T::zero(); ci * k];
            T::gemm(ci, n * p, k, &xr, false, &gcol, true, T::zero(), &mut dw);
            Tensor::new(w.shape(), dw).expect("kernel shape")
        });
        let gb = ctx.needs[2].then(|| {
            let plane = win.height * win.width;
            let sums = channel_sums(ctx.grad_out.data(), n, win.channels, plane);
            Tensor::new(&[win.channels], sums).expect("bias shape")
        });
        vec![gx, gw, gb]
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Zero-padded cross-correlation. `kernel: [Cout, Cin, kh, kw]`,
    /// `bias: [Cout]`.
    pub fn conv2d(
        &self,
        kernel: &Var<'t, T>,
        bias: &Var<'t, T>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, T>> {
        let (out, back) = {
            let (x, w, b) = (self.value(), kernel.value(), bias.value());
            let (n, ci, h, wd) = x.dims4("conv2d")?;
            let (co, wci, kh, kw) = w.dims4("conv2d")?;
            if wci != ci {
                return Err(TensorError::shape(
                    "conv2d",
                    format!("input has {ci} channels, kernel expects {wci}"),
                ));
            }
            if b.shape() != [co] {
                return Err(TensorError::shape(
                    "conv2d",
                    format!("bias {:?} for {co} output channels", b.shape()),
                ));
            }
            let win = Window::new("conv2d", (ci, h, wd), (kh, kw), stride, pad)?;
            let (p, k) = (win.positions(), win.rows());
            let col = win.im2col(x.data(), n);
            let mut tmp = vec![T::zero(); co * n * p];
            T::gemm(co, k, n * p, w.data(), false, &col, false, T::zero(), &mut tmp);
            let data = channel_major_to_batch(&tmp, n, co, p, Some(b.data()));
            let out = Tensor::new(&[n, co, win.out_h, win.out_w], data)?;
            (
                out,
                Conv2dBack {
                    window: win,
                    batch: n,
                    out_channels: co,
                },
            )
        };
        self.tape()
            .record("conv2d", out, &[*self, *kernel, *bias], back)
    }

    /// Fractionally strided convolution, the adjoint of [`Var::conv2d`] in
    /// its input. `kernel: [Cin, Cout, kh, kw]`; output extent is
    /// `(H - 1) * stride - 2 * pad + kh`.
    pub fn conv_transpose2d(
        &self,
        kernel: &Var<'t, T>,
        bias: &Var<'t, T>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, T>> {
        let (out, back) = {
            let (x, w, b) = (self.value(), kernel.value(), bias.value());
            let (n, ci, h, wd) = x.dims4("conv_transpose2d")?;
            let (wci, co, kh, kw) = w.dims4("conv_transpose2d")?;
            if wci != ci || b.shape() != [co] {
                return Err(TensorError::shape(
                    "conv_transpose2d",
                    format!(
                        "input {:?}, kernel {:?}, bias {:?}",
                        x.shape(),
                        w.shape(),
                        b.shape()
                    ),
                ));
            }
            if stride == 0 || h == 0 || wd == 0 {
                return Err(TensorError::shape("conv_transpose2d", "empty input or zero stride"));
            }
            let oh = ((h - 1) * stride + kh)
                .checked_sub(2 * pad)
                .filter(|&v| v > 0);
            let ow = ((wd - 1) * stride + kw)
                .checked_sub(2 * pad)
                .filter(|&v| v > 0);
            let (Some(oh), Some(ow)) = (oh, ow) else {
                return Err(TensorError::shape(
                    "conv_transpose2d",
                    format!("padding {pad} consumes the whole output"),
                ));
            };
            let win = Window::new("conv_transpose2d", (co, oh, ow), (kh, kw), stride, pad)?;
            debug_assert_eq!((win.out_h, win.out_w), (h, wd));
            let (p, k) = (h * wd, win.rows());
            let xr = batch_to_channel_major(x.data(), n, ci, p);
            let mut col = vec![T::zero(); k * n * p];
            T::gemm(k, ci, n * p, w.data(), true, &xr, false, T::zero(), &mut col);
            let mut data = win.col2im(&col, n);
            let plane = oh * ow;
            for (i, chunk) in data.chunks_mut(plane).enumerate() {
                let bias = b.data()[i % co];
                for v in chunk {
                    *v = *v + bias;
                }
            }
            let out = Tensor::new(&[n, co, oh, ow], data)?;
            (
                out,
                ConvTranspose2dBack {
                    window: win,
                    batch: n,
                    in_channels: ci,
                },
            )
        };
        self.tape()
            .record("conv_transpose2d", out, &[*self, *kernel, *bias], back)
    }
}
