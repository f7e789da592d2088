//! End-to-end gradient checks: small networks at 64-bit followed by each
//! objective, compared against central finite differences.

use ccgan_autograd::gradcheck::{primitive_checks, random_tensor, FnCheck, GradCheckRegistry};
use ccgan_autograd::{Tape, Tensor, TensorError, Var};

use crate::config::ArchConfig;
use crate::losses::{cycle_loss, d_loss_conditional, d_loss_unconditional, g_losses, identity_loss};
use crate::models::{Discriminator, Embedder, Generator};
use crate::params::{Bound, Initializer, ParamSet};

const SIDE: usize = 16;
const COND: usize = 3;
const BATCH: usize = 2;

fn contract(e: crate::Error) -> TensorError {
    TensorError::Contract(e.to_string())
}

/// Biases feeding an instance normalisation are cancelled by it; their exact
/// gradient is zero, so they are held fixed rather than checked.
fn cancelled_by_norm(name: &str) -> bool {
    name.ends_with(".bias")
        && !["out.bias", "conv1.bias", "conv4.bias", "head.bias"]
            .iter()
            .any(|k| name.ends_with(k))
}

/// Weights of a convolution reading the constant condition planes that never
/// touch padding add a per-sample constant, which the following normalisation
/// removes. Their exact gradient is zero too.
fn cancelled_taps(name: &str, shape: &[usize], cond: usize) -> Option<Tensor<f64>> {
    let reads_condition = name.ends_with("enc1.weight") || name.ends_with("conv2.weight");
    if !reads_condition || cond == 0 {
        return None;
    }
    let (cout, cin, k) = (shape[0], shape[1], shape[2]);
    let mut keep = vec![1.0; cout * cin * k * k];
    for o in 0..cout {
        for c in cin - cond..cin {
            for kh in 1..k {
                for kw in 1..k {
                    keep[((o * cin + c) * k + kh) * k + kw] = 0.0;
                }
            }
        }
    }
    Some(Tensor::new(shape, keep).expect("mask matches weight"))
}

enum Slot {
    Free,
    Fixed(Tensor<f64>),
    /// Checked where the mask is one, frozen at the given values elsewhere.
    Masked { keep: Tensor<f64>, frozen: Tensor<f64> },
}

/// Parameters split into checked inputs and fixed slots.
struct Split {
    free: Vec<Tensor<f64>>,
    slots: Vec<Slot>,
}

impl Split {
    fn new(params: &mut ParamSet<f64>, cond: usize, seed: u64) -> Self {
        for (k, t) in params.tensors_mut().enumerate() {
            *t = random_tensor(t.shape(), seed * 1000 + k as u64).map(|v| 0.5 * v);
        }
        let mut free = Vec::new();
        let mut slots = Vec::new();
        for (name, t) in params.iter() {
            if cancelled_by_norm(name) {
                slots.push(Slot::Fixed(t.clone()));
            } else if let Some(keep) = cancelled_taps(name, t.shape(), cond) {
                let scaled = |on: f64| {
                    let data = t.data().iter().zip(keep.data());
                    let data = data.map(|(v, m)| if *m == on { *v } else { 0.0 }).collect();
                    Tensor::new(t.shape(), data).expect("same shape")
                };
                let frozen = scaled(0.0);
                free.push(scaled(1.0));
                slots.push(Slot::Masked { keep, frozen });
            } else {
                free.push(t.clone());
                slots.push(Slot::Free);
            }
        }
        Self { free, slots }
    }

    fn bind<'t>(
        &self,
        tape: &'t Tape<f64>,
        vars: &mut std::slice::Iter<'_, Var<'t, f64>>,
    ) -> Result<Bound<'t, f64>, TensorError> {
        let mut out = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            out.push(match slot {
                Slot::Fixed(t) => tape.constant(t.clone()),
                Slot::Free => *vars.next().expect("one variable per free parameter"),
                Slot::Masked { keep, frozen } => {
                    let v = *vars.next().expect("one variable per free parameter");
                    v.mul(&tape.constant(keep.clone()))?
                        .add(&tape.constant(frozen.clone()))?
                }
            });
        }
        Ok(Bound::from_vars(out))
    }
}

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        image_channels: 1,
        image_size: SIDE,
        cond_dim: COND,
        gen_base: 2,
        res_blocks: 1,
        disc_base: 2,
        embed_dim: 4,
        num_classes: 3,
    }
}

fn image(seed: u64) -> Tensor<f64> {
    random_tensor(&[BATCH, 1, SIDE, SIDE], seed).map(|v| 0.9 * v)
}

fn condition(seed: u64) -> Tensor<f64> {
    random_tensor(&[BATCH, COND], seed)
}

fn generator(cond: usize, seed: u64) -> (Generator<f64>, Split) {
    let a = tiny_arch();
    let mut g = Generator::new("g", 1, cond, a.gen_base, a.res_blocks, &mut Initializer::new(seed));
    let split = Split::new(&mut g.params, cond, seed);
    (g, split)
}

fn discriminator(cond: usize, seed: u64) -> (Discriminator<f64>, Split) {
    let a = tiny_arch();
    let mut d = Discriminator::new("d", 1, cond, a.disc_base, &mut Initializer::new(seed));
    let split = Split::new(&mut d.params, cond, seed);
    (d, split)
}

fn inputs(head: Vec<Tensor<f64>>, splits: &[&Split]) -> Vec<Tensor<f64>> {
    let mut v = head;
    for s in splits {
        v.extend(s.free.iter().cloned());
    }
    v
}

/// Generator forward with the adversarial, cycle and identity objectives,
/// and both discriminators with theirs.
pub fn composite_checks() -> GradCheckRegistry {
    let mut reg = GradCheckRegistry::new();

    // G_{Y->X} then the conditional discriminator, non-saturating G loss
    {
        let (g, gs) = generator(COND, 1);
        let (d, _) = discriminator(COND, 2);
        reg.register(Box::new(FnCheck::new(
            "generator+adversarial_loss",
            inputs(vec![image(3), condition(4)], &[&gs]),
            move |tape, v| {
                let mut rest = v[2..].iter();
                let pg = gs.bind(tape, &mut rest)?;
                let pd = d.params.bind(tape, false);
                let x_hat = g.forward(&pg, v[0], Some(v[1])).map_err(contract)?;
                let s_f = d.forward(&pd, x_hat, Some(v[1])).map_err(contract)?;
                let zero = tape.constant(Tensor::scalar(0.0));
                let (_, l) = g_losses(&s_f, &s_f, &zero, None, 0.0).map_err(contract)?;
                Ok(l)
            },
        )));
    }

    // both generators around both cycles
    {
        let (g_xy, s_xy) = generator(0, 5);
        let (g_yx, s_yx) = generator(COND, 6);
        let n_xy = s_xy.free.len();
        reg.register(Box::new(FnCheck::new(
            "generator+cycle_loss",
            inputs(vec![image(27), image(28), condition(29)], &[&s_xy, &s_yx]),
            move |tape, v| {
                let (x, y, z) = (v[0], v[1], v[2]);
                let p_xy = s_xy.bind(tape, &mut v[3..3 + n_xy].iter())?;
                let p_yx = s_yx.bind(tape, &mut v[3 + n_xy..].iter())?;
                let y_hat = g_xy.forward(&p_xy, x, None).map_err(contract)?;
                let x_rec = g_yx.forward(&p_yx, y_hat, Some(z)).map_err(contract)?;
                let x_hat = g_yx.forward(&p_yx, y, Some(z)).map_err(contract)?;
                let y_rec = g_xy.forward(&p_xy, x_hat, None).map_err(contract)?;
                cycle_loss(&x, &x_rec, &y, &y_rec, 10.0, 10.0).map_err(contract)
            },
        )));
    }

    // G_{Y->X} then the frozen embedder, identity loss
    {
        let (g, gs) = generator(COND, 10);
        let emb = Embedder::<f64>::new(&tiny_arch(), &mut Initializer::new(11));
        let target = random_tensor(&[BATCH, 4], 12).map(|v| 0.5 * v);
        reg.register(Box::new(FnCheck::new(
            "generator+identity_loss",
            inputs(vec![image(13), condition(14)], &[&gs]),
            move |tape, v| {
                let pg = gs.bind(tape, &mut v[2..].iter())?;
                let x_hat = g.forward(&pg, v[0], Some(v[1])).map_err(contract)?;
                let pe = emb.params.bind(tape, false);
                let (e, _) = emb.forward(&pe, x_hat).map_err(contract)?;
                identity_loss(&e, &tape.constant(target.clone())).map_err(contract)
            },
        )));
    }

    // D_X on matched, fake and mismatched pairs
    {
        let (d, ds) = discriminator(COND, 15);
        reg.register(Box::new(FnCheck::new(
            "discriminator+conditional_loss",
            inputs(vec![image(16), image(17), condition(18), condition(19)], &[&ds]),
            move |tape, v| {
                let pd = ds.bind(tape, &mut v[4..].iter())?;
                let s_r = d.forward(&pd, v[0], Some(v[2])).map_err(contract)?;
                let s_f = d.forward(&pd, v[1], Some(v[2])).map_err(contract)?;
                let s_w = d.forward(&pd, v[0], Some(v[3])).map_err(contract)?;
                d_loss_conditional(&s_r, &s_f, &s_w).map_err(contract)
            },
        )));
    }

    // D_Y on real and fake low-res images
    {
        let (d, ds) = discriminator(0, 20);
        reg.register(Box::new(FnCheck::new(
            "discriminator+unconditional_loss",
            inputs(vec![image(21), image(22)], &[&ds]),
            move |tape, v| {
                let pd = ds.bind(tape, &mut v[2..].iter())?;
                let r = d.forward(&pd, v[0], None).map_err(contract)?;
                let f = d.forward(&pd, v[1], None).map_err(contract)?;
                d_loss_unconditional(&r, &f).map_err(contract)
            },
        )));
    }
    reg
}

/// Every primitive check followed by the composite ones.
pub fn all_checks() -> GradCheckRegistry {
    let mut reg = primitive_checks();
    for check in composite_checks().into_checks() {
        reg.register(check);
    }
    reg
}
