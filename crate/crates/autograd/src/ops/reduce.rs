use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, BackwardCtx, Var};
use crate::tensor::Tensor;

/// Mean (or sum) over contiguous groups of `group` elements; the output has
/// one value per group.
struct GroupReduceBack<T> {
    group: usize,
    scale: T,
}

impl<T: Scalar> Backward<T> for GroupReduceBack<T> {
    fn name(&self) -> &'static str {
        "reduce"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let input = ctx.inputs[0];
        let g = ctx.grad_out.data();
        let data = (0..input.numel())
            .map(|i| g[i / self.group] * self.scale)
            .collect();
        vec![Some(Tensor::new(input.shape(), data).expect("input shape"))]
    }
}

fn group_reduce<'t, T: Scalar>(
    x: &Var<'t, T>,
    group: usize,
    out_shape: &[usize],
    mean: bool,
) -> Result<Var<'t, T>> {
    let scale = if mean {
        T::one() / T::from_f64(group as f64)
    } else {
        T::one()
    };
    let out = {
        let v = x.value();
        let data = v
            .data()
            .chunks(group)
            .map(|c| c.iter().fold(T::zero(), |acc, &e| acc + e) * scale)
            .collect();
        Tensor::new(out_shape, data)?
    };
    x.tape()
        .record("reduce", out, &[*x], GroupReduceBack { group, scale })
}

struct L1Back;

impl<T: Scalar> Backward<T> for L1Back {
    fn name(&self) -> &'static str {
        "l1_distance"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (ctx.inputs[0], ctx.inputs[1]);
        let scale = ctx.grad_out.item() / T::from_f64(a.numel() as f64);
        let sign: Vec<T> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| {
                let d = x - y;
                if d > T::zero() {
                    scale
                } else if d < T::zero() {
                    -scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let ga = Tensor::new(a.shape(), sign).expect("same shape");
        let gb = ctx.needs[1].then(|| ga.map(|v| -v));
        vec![ctx.needs[0].then_some(ga), gb]
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn sum(&self) -> Result<Var<'t, T>> {
        let n = self.value().numel();
        group_reduce(self, n.max(1), &[1], false)
    }

    pub fn mean(&self) -> Result<Var<'t, T>> {
        let n = self.value().numel();
        if n == 0 {
            return Err(TensorError::shape("mean", "empty tensor"));
        }
        group_reduce(self, n, &[1], true)
    }

    /// Mean over every axis except the leading one: `[N, ...] -> [N]`.
    pub fn mean_per_sample(&self) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let n = *shape.first().ok_or_else(|| TensorError::shape("mean_per_sample", "rank 0"))?;
        let per: usize = shape[1..].iter().product();
        if n == 0 || per == 0 {
            return Err(TensorError::shape("mean_per_sample", format!("{shape:?}")));
        }
        group_reduce(self, per, &[n], true)
    }

    /// Per-channel spatial mean: `[N, C, H, W] -> [N, C]`.
    pub fn mean_spatial(&self) -> Result<Var<'t, T>> {
        let (n, c, h, w) = self.value().dims4("mean_spatial")?;
        group_reduce(self, h * w, &[n, c], true)
    }

    /// Mean absolute difference over all elements.
    pub fn l1_distance(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(TensorError::shape("l1_distance", format!("{sa:?} vs {sb:?}")));
        }
        let out = {
            let (a, b) = (self.value(), other.value());
            let total = a
                .data()
                .iter()
                .zip(b.data())
                .fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs());
            Tensor::scalar(total / T::from_f64(a.numel() as f64))
        };
        self.tape()
            .record("l1_distance", out, &[*self, *other], L1Back)
    }
}
