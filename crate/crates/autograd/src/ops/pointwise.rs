use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, BackwardCtx, Var};
use crate::tensor::Tensor;

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("operands share a shape")
}

fn same_shape<T: Scalar>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(TensorError::shape(op, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

struct AddBack;

impl<T: Scalar> Backward<T> for AddBack {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(ctx.grad_out.clone()), Some(ctx.grad_out.clone())]
    }
}

struct SubBack;

impl<T: Scalar> Backward<T> for SubBack {
    fn name(&self) -> &'static str {
        "sub"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        vec![
            Some(ctx.grad_out.clone()),
            ctx.needs[1].then(|| ctx.grad_out.map(|g| -g)),
        ]
    }
}

struct MulBack;

impl<T: Scalar> Backward<T> for MulBack {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (ctx.inputs[0], ctx.inputs[1]);
        vec![
            ctx.needs[0].then(|| zip_map(ctx.grad_out, b, |g, y| g * y)),
            ctx.needs[1].then(|| zip_map(ctx.grad_out, a, |g, x| g * x)),
        ]
    }
}

struct ScaleBack<T>(T);

impl<T: Scalar> Backward<T> for ScaleBack<T> {
    fn name(&self) -> &'static str {
        "mul_scalar"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let k = self.0;
        vec![Some(ctx.grad_out.map(|g| g * k))]
    }
}

struct ShiftBack;

impl<T: Scalar> Backward<T> for ShiftBack {
    fn name(&self) -> &'static str {
        "add_scalar"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(ctx.grad_out.clone())]
    }
}

/// Pointwise activation whose derivative is a function of input and output.
#[derive(Clone, Copy)]
enum Activation<T> {
    Relu,
    LeakyRelu(T),
    Tanh,
    Sigmoid,
    /// `ln(clamp(x, lo, hi))`; zero slope outside the clamp range.
    LogClamped(T, T),
}

impl<T: Scalar> Activation<T> {
    fn forward(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu(slope) => {
                if x > T::zero() {
                    x
                } else {
                    x * slope
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => {
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            }
            Activation::LogClamped(lo, hi) => x.max(lo).min(hi).ln(),
        }
    }

    // at the kink the left limit is used
    fn derivative(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > T::zero() {
                    T::one()
                } else {
                    slope
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
            Activation::LogClamped(lo, hi) => {
                if x < lo || x > hi {
                    T::zero()
                } else {
                    T::one() / x
                }
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::LogClamped(..) => "log",
        }
    }
}

struct ActivationBack<T>(Activation<T>);

impl<T: Scalar> Backward<T> for ActivationBack<T> {
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0].data();
        let y = ctx.output.data();
        let data = ctx
            .grad_out
            .data()
            .iter()
            .enumerate()
            .map(|(i, &g)| g * self.0.derivative(x[i], y[i]))
            .collect();
        vec![Some(Tensor::new(ctx.output.shape(), data).expect("same shape"))]
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("add", self, other)?;
        let out = zip_map(&self.value(), &other.value(), |a, b| a + b);
        self.tape().record("add", out, &[*self, *other], AddBack)
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("sub", self, other)?;
        let out = zip_map(&self.value(), &other.value(), |a, b| a - b);
        self.tape().record("sub", out, &[*self, *other], SubBack)
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("mul", self, other)?;
        let out = zip_map(&self.value(), &other.value(), |a, b| a * b);
        self.tape().record("mul", out, &[*self, *other], MulBack)
    }

    pub fn mul_scalar(&self, k: f64) -> Result<Var<'t, T>> {
        let k = T::from_f64(k);
        let out = self.value().map(|v| v * k);
        self.tape().record("mul_scalar", out, &[*self], ScaleBack(k))
    }

    pub fn add_scalar(&self, k: f64) -> Result<Var<'t, T>> {
        let k = T::from_f64(k);
        let out = self.value().map(|v| v + k);
        self.tape().record("add_scalar", out, &[*self], ShiftBack)
    }

    pub fn neg(&self) -> Result<Var<'t, T>> {
        self.mul_scalar(-1.0)
    }

    /// `1 - x`
    pub fn one_minus(&self) -> Result<Var<'t, T>> {
        self.mul_scalar(-1.0)?.add_scalar(1.0)
    }

    fn activate(&self, act: Activation<T>) -> Result<Var<'t, T>> {
        let out = self.value().map(|v| act.forward(v));
        self.tape()
            .record(act.name(), out, &[*self], ActivationBack(act))
    }

    pub fn relu(&self) -> Result<Var<'t, T>> {
        self.activate(Activation::Relu)
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var<'t, T>> {
        self.activate(Activation::LeakyRelu(T::from_f64(slope)))
    }

    pub fn tanh(&self) -> Result<Var<'t, T>> {
        self.activate(Activation::Tanh)
    }

    pub fn sigmoid(&self) -> Result<Var<'t, T>> {
        self.activate(Activation::Sigmoid)
    }

    /// Natural log of the input clamped to `[lo, hi]`.
    pub fn ln_clamped(&self, lo: f64, hi: f64) -> Result<Var<'t, T>> {
        self.activate(Activation::LogClamped(T::from_f64(lo), T::from_f64(hi)))
    }
}

#[cfg(test)]
mod tests {
    use crate::Tape;
    use crate::Tensor;

    #[test]
    fn sigmoid_is_stable_for_large_magnitudes() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(&[3], vec![-800.0, 0.0, 800.0]).unwrap());
        let y = x.sigmoid().unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn leaky_relu_kink_uses_negative_slope() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
        let y = x.leaky_relu(0.2).unwrap().sum().unwrap();
        tape.backward(y).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.2, 1.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(&[2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn clamped_log_stays_finite() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
        let y = x.ln_clamped(1e-7, 1.0 - 1e-7).unwrap();
        assert!(y.value().is_finite());
        assert!((y.value().data()[0] - (1e-7f64).ln()).abs() < 1e-12);
    }
}
