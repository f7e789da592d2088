use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, BackwardCtx, Var};
use crate::tensor::Tensor;

struct ConcatChannelsBack {
    ca: usize,
    cb: usize,
    plane: usize,
}

impl<T: Scalar> Backward<T> for ConcatChannelsBack {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let g = ctx.grad_out.data();
        let (sa, sb) = (self.ca * self.plane, self.cb * self.plane);
        let n = ctx.inputs[0].shape()[0];
        let mut ga = Vec::with_capacity(n * sa);
        let mut gb = Vec::with_capacity(n * sb);
        for chunk in g.chunks(sa + sb) {
            ga.extend_from_slice(&chunk[..sa]);
            gb.extend_from_slice(&chunk[sa..]);
        }
        vec![
            Some(Tensor::new(ctx.inputs[0].shape(), ga).expect("a shape")),
            Some(Tensor::new(ctx.inputs[1].shape(), gb).expect("b shape")),
        ]
    }
}

struct ReplicateBack {
    plane: usize,
}

impl<T: Scalar> Backward<T> for ReplicateBack {
    fn name(&self) -> &'static str {
        "replicate_condition"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let data = ctx
            .grad_out
            .data()
            .chunks(self.plane)
            .map(|c| c.iter().fold(T::zero(), |acc, &v| acc + v))
            .collect();
        vec![Some(Tensor::new(ctx.inputs[0].shape(), data).expect("z shape"))]
    }
}

struct ReshapeBack;

impl<T: Scalar> Backward<T> for ReshapeBack {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let g = ctx.grad_out.clone().reshape(ctx.inputs[0].shape());
        vec![Some(g.expect("same element count"))]
    }
}

/// `y = x w^T + b` for `x: [N, in]`, `w: [out, in]`, `b: [out]`.
struct LinearBack;

impl<T: Scalar> Backward<T> for LinearBack {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
        let (n, fin) = (x.shape()[0], x.shape()[1]);
        let fout = w.shape()[0];
        let g = ctx.grad_out.data();
        let gx = ctx.needs[0].then(|| {
            let mut out = vec![T::zero(); n * fin];
            T::gemm(n, fout, fin, g, false, w.data(), false, T::zero(), &mut out);
            Tensor::new(x.shape(), out).expect("x shape")
        });
        let gw = ctx.needs[1].then(|| {
            let mut out = vec![T::zero(); fout * fin];
            T::gemm(fout, n, fin, g, true, x.data(), false, T::zero(), &mut out);
            Tensor::new(w.shape(), out).expect("w shape")
        });
        let gb = ctx.needs[2].then(|| {
            let mut out = vec![T::zero(); fout];
            for row in g.chunks(fout) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = *o + v;
                }
            }
            Tensor::new(&[fout], out).expect("b shape")
        });
        vec![gx, gw, gb]
    }
}

/// Mean softmax cross-entropy of `[N, K]` logits against class indices.
struct SoftmaxXentBack {
    labels: Vec<usize>,
}

impl<T: Scalar> Backward<T> for SoftmaxXentBack {
    fn name(&self) -> &'static str {
        "softmax_cross_entropy"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let logits = ctx.inputs[0];
        let k = logits.shape()[1];
        let n = self.labels.len();
        let scale = ctx.grad_out.item() / T::from_f64(n as f64);
        let mut out = Vec::with_capacity(n * k);
        for (row, &label) in logits.data().chunks(k).zip(&self.labels) {
            let probs = softmax(row);
            for (j, p) in probs.into_iter().enumerate() {
                let target = if j == label { T::one() } else { T::zero() };
                out.push((p - target) * scale);
            }
        }
        vec![Some(Tensor::new(logits.shape(), out).expect("logit shape"))]
    }
}

pub fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
    let total = exps.iter().fold(T::zero(), |acc, &v| acc + v);
    exps.into_iter().map(|e| e / total).collect()
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Channel concatenation of two `N x C x H x W` tensors; `self` first.
    pub fn concat_channels(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let out = {
            let (a, b) = (self.value(), other.value());
            let (na, ca, ha, wa) = a.dims4("concat_channels")?;
            let (nb, cb, hb, wb) = b.dims4("concat_channels")?;
            if (na, ha, wa) != (nb, hb, wb) {
                return Err(TensorError::shape(
                    "concat_channels",
                    format!(
                        "batch/spatial extents differ: {:?} vs {:?}",
                        a.shape(),
                        b.shape()
                    ),
                ));
            }
            let plane = ha * wa;
            let mut data = Vec::with_capacity(a.numel() + b.numel());
            for i in 0..na {
                data.extend_from_slice(&a.data()[i * ca * plane..(i + 1) * ca * plane]);
                data.extend_from_slice(&b.data()[i * cb * plane..(i + 1) * cb * plane]);
            }
            let out = Tensor::new(&[na, ca + cb, ha, wa], data)?;
            (out, ConcatChannelsBack { ca, cb, plane })
        };
        self.tape()
            .record("concat_channels", out.0, &[*self, *other], out.1)
    }

    /// Broadcasts per-sample condition vectors `[N, d]` to constant feature
    /// maps `[N, d, height, width]`.
    pub fn replicate_condition(&self, height: usize, width: usize) -> Result<Var<'t, T>> {
        if height == 0 || width == 0 {
            return Err(TensorError::shape(
                "replicate_condition",
                format!("spatial size {height}x{width}"),
            ));
        }
        let out = {
            let z = self.value();
            let (n, d) = match z.shape() {
                &[n, d] if d >= 1 => (n, d),
                s => {
                    return Err(TensorError::shape(
                        "replicate_condition",
                        format!("expected [N, d] with d >= 1, got {s:?}"),
                    ))
                }
            };
            let plane = height * width;
            let mut data = Vec::with_capacity(n * d * plane);
            for &v in z.data() {
                data.extend(std::iter::repeat_n(v, plane));
            }
            Tensor::new(&[n, d, height, width], data)?
        };
        self.tape().record(
            "replicate_condition",
            out,
            &[*self],
            ReplicateBack {
                plane: height * width,
            },
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let out = self.to_tensor().reshape(shape)?;
        self.tape().record("reshape", out, &[*self], ReshapeBack)
    }

    /// `[N, ...] -> [N, prod(...)]`
    pub fn flatten(&self) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(&[n, rest])
    }

    /// Dense layer `x w^T + b` with `w: [out, in]`.
    pub fn linear(&self, weight: &Var<'t, T>, bias: &Var<'t, T>) -> Result<Var<'t, T>> {
        let out = {
            let (x, w, b) = (self.value(), weight.value(), bias.value());
            let (n, fin) = match x.shape() {
                &[n, f] => (n, f),
                s => return Err(TensorError::shape("linear", format!("input {s:?}"))),
            };
            let (fout, win) = match w.shape() {
                &[o, i] => (o, i),
                s => return Err(TensorError::shape("linear", format!("weight {s:?}"))),
            };
            if win != fin || b.shape() != [fout] {
                return Err(TensorError::shape(
                    "linear",
                    format!("input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
                ));
            }
            let mut out = Vec::with_capacity(n * fout);
            for _ in 0..n {
                out.extend_from_slice(b.data());
            }
            T::gemm(n, fin, fout, x.data(), false, w.data(), true, T::one(), &mut out);
            Tensor::new(&[n, fout], out)?
        };
        self.tape()
            .record("linear", out, &[*self, *weight, *bias], LinearBack)
    }

    /// Mean cross-entropy between softmax of `[N, K]` logits and labels.
    pub fn softmax_cross_entropy(&self, labels: &[usize]) -> Result<Var<'t, T>> {
        let out = {
            let logits = self.value();
            let (n, k) = match logits.shape() {
                &[n, k] => (n, k),
                s => return Err(TensorError::shape("softmax_cross_entropy", format!("{s:?}"))),
            };
            if labels.len() != n || labels.iter().any(|&l| l >= k) {
                return Err(TensorError::shape(
                    "softmax_cross_entropy",
                    format!("{} labels for {n} rows of {k} classes", labels.len()),
                ));
            }
            let mut total = T::zero();
            for (row, &label) in logits.data().chunks(k).zip(labels) {
                let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let lse = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln() + max;
                total = total + lse - row[label];
            }
            Tensor::scalar(total / T::from_f64(n as f64))
        };
        self.tape().record(
            "softmax_cross_entropy",
            out,
            &[*self],
            SoftmaxXentBack {
                labels: labels.to_vec(),
            },
        )
    }
}
