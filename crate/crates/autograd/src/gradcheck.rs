//! Central finite-difference verification of reverse-mode gradients, plus a
//! named registry of checks so tools can print a pass/fail table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Default threshold on the max relative error of a check.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Default central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Relative error with the denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares autodiff gradients of a scalar function of several tensors with
/// central differences, returning the max relative error over every input
/// element. `f` must be deterministic.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        tape.backward(loss)?;
        vars.iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    };
    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    let mut worst = 0.0f64;
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe[k].data_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Single-input form of [`finite_diff_check_many`].
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    finite_diff_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)
}

/// Uniform `[-1, 1)` test tensor from a fixed seed.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Random tensor whose entries are at least `margin` away from zero.
pub fn random_tensor_off_zero(shape: &[usize], seed: u64, margin: f64) -> Tensor<f64> {
    random_tensor(shape, seed).map(|v| v.signum() * (v.abs() + margin))
}

/// `sum(out * r)` for fixed random `r`, turning any output into a scalar
/// with non-degenerate gradients.
pub fn weighted_sum<'t>(out: Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let weights = random_tensor(&out.shape(), seed ^ 0x9e37_79b9);
    let w = out.tape().constant(weights);
    out.mul(&w)?.sum()
}

/// A named gradient check.
pub trait GradCheck {
    fn name(&self) -> &str;

    /// Max relative error between autodiff and finite differences.
    fn run(&self) -> Result<f64>;
}

type CheckFn = Box<dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>>;

/// Check defined by a closure over fixed inputs.
pub struct FnCheck {
    name: String,
    inputs: Vec<Tensor<f64>>,
    f: CheckFn,
}

impl FnCheck {
    pub fn new<F>(name: impl Into<String>, inputs: Vec<Tensor<f64>>, f: F) -> Self
    where
        F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>> + 'static,
    {
        Self {
            name: name.into(),
            inputs,
            f: Box::new(f),
        }
    }
}

impl GradCheck for FnCheck {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self) -> Result<f64> {
        finite_diff_check_many(&self.f, &self.inputs, GRADCHECK_STEP)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub name: String,
    /// `Err` carries the message of a check that could not be evaluated.
    pub max_rel_error: std::result::Result<f64, String>,
    pub passed: bool,
}

#[derive(Default)]
pub struct GradCheckRegistry {
    checks: Vec<Box<dyn GradCheck>>,
}

impl GradCheckRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, check: Box<dyn GradCheck>) {
        self.checks.push(check);
    }

    pub fn names(&self) -> Vec<&str> {
        self.checks.iter().map(|c| c.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn into_checks(self) -> Vec<Box<dyn GradCheck>> {
        self.checks
    }

    pub fn run_all(&self, tolerance: f64) -> Vec<GradCheckOutcome> {
        self.checks
            .iter()
            .map(|c| {
                let result = c.run().map_err(|e| e.to_string());
                let passed = matches!(result, Ok(err) if err < tolerance);
                GradCheckOutcome {
                    name: c.name().to_string(),
                    max_rel_error: result,
                    passed,
                }
            })
            .collect()
    }
}

/// One check per differentiable primitive, each on small random inputs kept
/// away from non-smooth points.
pub fn primitive_checks() -> GradCheckRegistry {
    let mut reg = GradCheckRegistry::new();
    let mut add = |name: &str, inputs: Vec<Tensor<f64>>, f: CheckFn| {
        reg.register(Box::new(FnCheck {
            name: name.to_string(),
            inputs,
            f,
        }));
    };
    let img = |seed| random_tensor(&[2, 3, 5, 5], seed);

    add(
        "conv2d",
        vec![
            random_tensor(&[2, 3, 6, 6], 1),
            random_tensor(&[4, 3, 3, 3], 2),
            random_tensor(&[4], 3),
        ],
        Box::new(|_, v| weighted_sum(v[0].conv2d(&v[1], &v[2], 2, 1)?, 4)),
    );
    add(
        "conv_transpose2d",
        vec![
            random_tensor(&[2, 3, 3, 3], 5),
            random_tensor(&[3, 2, 4, 4], 6),
            random_tensor(&[2], 7),
        ],
        Box::new(|_, v| weighted_sum(v[0].conv_transpose2d(&v[1], &v[2], 2, 1)?, 8)),
    );
    add(
        "leaky_relu",
        vec![random_tensor_off_zero(&[2, 3, 4, 4], 9, 0.05)],
        Box::new(|_, v| weighted_sum(v[0].leaky_relu(0.2)?, 10)),
    );
    add(
        "relu",
        vec![random_tensor_off_zero(&[2, 3, 4, 4], 11, 0.05)],
        Box::new(|_, v| weighted_sum(v[0].relu()?, 12)),
    );
    add(
        "tanh",
        vec![img(13)],
        Box::new(|_, v| weighted_sum(v[0].tanh()?, 14)),
    );
    add(
        "sigmoid",
        vec![img(15)],
        Box::new(|_, v| weighted_sum(v[0].sigmoid()?, 16)),
    );
    add(
        "log",
        vec![random_tensor(&[8], 17).map(|v| 0.5 + 0.4 * v)],
        Box::new(|_, v| weighted_sum(v[0].ln_clamped(1e-7, 1.0 - 1e-7)?, 18)),
    );
    add(
        "instance_norm",
        vec![random_tensor(&[2, 3, 4, 4], 19)],
        Box::new(|_, v| weighted_sum(v[0].instance_norm()?, 20)),
    );
    add(
        "add_sub_mul",
        vec![img(21), img(22)],
        Box::new(|_, v| {
            let s = v[0].add(&v[1])?.mul(&v[0].sub(&v[1])?)?;
            weighted_sum(s, 23)
        }),
    );
    add(
        "scalar_ops",
        vec![img(24)],
        Box::new(|_, v| weighted_sum(v[0].mul_scalar(-1.7)?.add_scalar(0.3)?.one_minus()?, 25)),
    );
    add(
        "sum_mean",
        vec![img(26)],
        Box::new(|_, v| {
            let a = v[0].mul(&v[0])?.sum()?;
            let b = v[0].mean_per_sample()?.mul(&v[0].mean_per_sample()?)?.mean()?;
            let c = weighted_sum(v[0].mean_spatial()?, 27)?;
            a.add(&b)?.add(&c)
        }),
    );
    add(
        "l1_distance",
        vec![img(28), img(28).map(|v| v + 0.2 * v.signum() + 0.1)],
        Box::new(|_, v| v[0].l1_distance(&v[1])),
    );
    add(
        "avg_pool2d",
        vec![random_tensor(&[2, 2, 4, 6], 29)],
        Box::new(|_, v| weighted_sum(v[0].avg_pool2d(2)?, 30)),
    );
    add(
        "resize_nearest",
        vec![random_tensor(&[1, 2, 3, 3], 31)],
        Box::new(|_, v| weighted_sum(v[0].resize_nearest(6, 7)?, 32)),
    );
    add(
        "resize_bilinear",
        vec![random_tensor(&[1, 2, 3, 4], 33)],
        Box::new(|_, v| weighted_sum(v[0].resize_bilinear(7, 8)?, 34)),
    );
    add(
        "concat_channels",
        vec![random_tensor(&[2, 2, 3, 3], 35), random_tensor(&[2, 3, 3, 3], 36)],
        Box::new(|_, v| weighted_sum(v[0].concat_channels(&v[1])?, 37)),
    );
    add(
        "replicate_condition",
        vec![random_tensor(&[2, 3], 38)],
        Box::new(|_, v| weighted_sum(v[0].replicate_condition(3, 4)?, 39)),
    );
    add(
        "linear",
        vec![
            random_tensor(&[3, 5], 40),
            random_tensor(&[4, 5], 41),
            random_tensor(&[4], 42),
        ],
        Box::new(|_, v| weighted_sum(v[0].linear(&v[1], &v[2])?, 43)),
    );
    add(
        "flatten",
        vec![random_tensor(&[2, 2, 2, 2], 44)],
        Box::new(|_, v| weighted_sum(v[0].flatten()?, 45)),
    );
    add(
        "softmax_cross_entropy",
        vec![random_tensor(&[4, 5], 46).map(|v| 2.0 * v)],
        Box::new(|_, v| v[0].softmax_cross_entropy(&[0, 3, 4, 1])),
    );
    add(
        "conv_norm_tanh_chain",
        vec![
            random_tensor(&[1, 2, 6, 6], 47),
            random_tensor(&[3, 2, 3, 3], 48),
        ],
        // the bias is cancelled by the normalisation, so its exact gradient is
        // zero and a relative error against rounding noise is meaningless
        Box::new(|tape, v| {
            let bias = tape.constant(random_tensor(&[3], 49));
            let y = v[0].conv2d(&v[1], &bias, 1, 1)?.instance_norm()?.tanh()?;
            weighted_sum(y, 50)
        }),
    );
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_zero_error() {
        let x = random_tensor(&[3, 4], 7);
        let err = finite_diff_check(|_, v| v.sum(), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn leaky_relu_away_from_kink() {
        let x = random_tensor_off_zero(&[2, 3, 3], 8, 1e-3);
        let err = finite_diff_check(|_, v| weighted_sum(v.leaky_relu(0.2)?, 1), &x, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn composite_chain_within_tolerance() {
        let x = random_tensor(&[1, 2, 6, 6], 3);
        let w = random_tensor(&[2, 2, 3, 3], 4);
        let err = finite_diff_check_many(
            |tape, v| {
                let b = tape.constant(random_tensor(&[2], 5));
                weighted_sum(v[0].conv2d(&v[1], &b, 1, 1)?.instance_norm()?.tanh()?, 9)
            },
            &[x, w],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn registry_reports_failures() {
        struct Broken;
        impl GradCheck for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn run(&self) -> Result<f64> {
                Ok(0.5)
            }
        }
        let mut reg = GradCheckRegistry::new();
        reg.register(Box::new(Broken));
        let out = reg.run_all(GRADCHECK_TOLERANCE);
        assert_eq!(out.len(), 1);
        assert!(!out[0].passed);
    }
}
