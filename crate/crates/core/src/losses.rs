//! Adversarial, cycle-consistency and identity objectives.
//!
//! Every function returns a quantity to be minimised: discriminators minimise
//! their negative log-likelihood, generators the non-saturating `-log(score)`.
//! Score vectors hold one probability per sample and are averaged over the
//! batch.

use ccgan_autograd::{Scalar, Var};

use crate::error::Result;

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before any log.
pub const SCORE_CLAMP: f64 = 1e-7;

fn log_score<'t, T: Scalar>(s: &Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(s.ln_clamped(SCORE_CLAMP, 1.0 - SCORE_CLAMP)?)
}

fn log_one_minus<'t, T: Scalar>(s: &Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(s.one_minus()?.ln_clamped(SCORE_CLAMP, 1.0 - SCORE_CLAMP)?)
}

/// `L_DY = -[log rho_r + log(1 - rho_f)]`
pub fn d_loss_unconditional<'t, T: Scalar>(
    rho_r: &Var<'t, T>,
    rho_f: &Var<'t, T>,
) -> Result<Var<'t, T>> {
    let ll = log_score(rho_r)?.add(&log_one_minus(rho_f)?)?;
    Ok(ll.mean()?.neg()?)
}

/// `L_DX = -{log s_r + [log(1 - s_f) + log(1 - s_w)] / 2}`
pub fn d_loss_conditional<'t, T: Scalar>(
    s_r: &Var<'t, T>,
    s_f: &Var<'t, T>,
    s_w: &Var<'t, T>,
) -> Result<Var<'t, T>> {
    let negatives = log_one_minus(s_f)?.add(&log_one_minus(s_w)?)?.mul_scalar(0.5)?;
    let ll = log_score(s_r)?.add(&negatives)?;
    Ok(ll.mean()?.neg()?)
}

/// `L_c = lambda1 * mean|x_rec - x| + lambda2 * mean|y_rec - y|`
pub fn cycle_loss<'t, T: Scalar>(
    x: &Var<'t, T>,
    x_rec: &Var<'t, T>,
    y: &Var<'t, T>,
    y_rec: &Var<'t, T>,
    lambda1: f64,
    lambda2: f64,
) -> Result<Var<'t, T>> {
    let fwd = x_rec.l1_distance(x)?.mul_scalar(lambda1)?;
    let bwd = y_rec.l1_distance(y)?.mul_scalar(lambda2)?;
    Ok(fwd.add(&bwd)?)
}

/// Mean absolute difference over all `N * e` embedding entries.
pub fn identity_loss<'t, T: Scalar>(
    emb_fake: &Var<'t, T>,
    emb_target: &Var<'t, T>,
) -> Result<Var<'t, T>> {
    Ok(emb_fake.l1_distance(emb_target)?)
}

/// `(L_GXY, L_GYX)` with `L_GXY = -log rho_f + L_c` and
/// `L_GYX = -log s_f + L_c + w_id * L_id`. The identity term is skipped when
/// `l_id` is `None` or `w_id` is zero.
pub fn g_losses<'t, T: Scalar>(
    rho_f: &Var<'t, T>,
    s_f: &Var<'t, T>,
    l_c: &Var<'t, T>,
    l_id: Option<&Var<'t, T>>,
    w_id: f64,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let g_xy = log_score(rho_f)?.mean()?.neg()?.add(l_c)?;
    let mut g_yx = log_score(s_f)?.mean()?.neg()?.add(l_c)?;
    if let Some(l_id) = l_id {
        if w_id != 0.0 {
            g_yx = g_yx.add(&l_id.mul_scalar(w_id)?)?;
        }
    }
    Ok((g_xy, g_yx))
}

/// Per-step scalars of one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBundle {
    pub rho_r: f64,
    pub rho_f: f64,
    pub s_r: f64,
    pub s_f: f64,
    pub s_w: f64,
    pub l_dy: f64,
    pub l_dx: f64,
    pub l_gxy: f64,
    pub l_gyx: f64,
    pub l_c: f64,
    pub l_id: f64,
}

impl LossBundle {
    pub const COLUMNS: [&'static str; 11] = [
        "rho_r", "rho_f", "s_r", "s_f", "s_w", "L_DY", "L_DX", "L_GXY", "L_GYX", "L_c", "L_id",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.rho_r, self.rho_f, self.s_r, self.s_f, self.s_w, self.l_dy, self.l_dx,
            self.l_gxy, self.l_gyx, self.l_c, self.l_id,
        ]
    }

    pub fn from_values(v: &[f64]) -> Option<Self> {
        match *v {
            [rho_r, rho_f, s_r, s_f, s_w, l_dy, l_dx, l_gxy, l_gyx, l_c, l_id] => Some(Self {
                rho_r,
                rho_f,
                s_r,
                s_f,
                s_w,
                l_dy,
                l_dx,
                l_gxy,
                l_gyx,
                l_c,
                l_id,
            }),
            _ => None,
        }
    }

    /// Name of the first non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        Self::COLUMNS
            .iter()
            .zip(self.values())
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| *n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccgan_autograd::{Tape, Tensor};

    fn scores<'t>(tape: &'t Tape<f64>, v: &[f64]) -> Var<'t, f64> {
        tape.param(Tensor::new(&[v.len()], v.to_vec()).unwrap())
    }

    #[test]
    fn perfect_discriminators_approach_zero() {
        let tape = Tape::new();
        let one = scores(&tape, &[1.0]);
        let zero = scores(&tape, &[0.0]);
        let l = d_loss_conditional(&one, &zero, &zero).unwrap().item();
        assert!(l.abs() < 1e-6, "{l}");
        let l = d_loss_unconditional(&one, &zero).unwrap().item();
        assert!(l.abs() < 1e-6, "{l}");
    }

    #[test]
    fn batch_scores_are_averaged() {
        let tape = Tape::new();
        let r = scores(&tape, &[0.9, 0.5]);
        let f = scores(&tape, &[0.1, 0.5]);
        let expected = -((0.9f64.ln() + 0.9f64.ln()) + (0.5f64.ln() * 2.0)) / 2.0;
        let l = d_loss_unconditional(&r, &f).unwrap().item();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_term_is_weighted() {
        let tape = Tape::new();
        let s = scores(&tape, &[0.5]);
        let lc = tape.constant(Tensor::scalar(0.2));
        let lid = tape.constant(Tensor::scalar(0.3));
        let (_, g) = g_losses(&s, &s, &lc, Some(&lid), 2.0).unwrap();
        assert!((g.item() - (2f64.ln() + 0.2 + 0.6)).abs() < 1e-12);
    }

    #[test]
    fn bundle_round_trips_through_values() {
        let b = LossBundle {
            s_w: 0.25,
            l_c: f64::NAN,
            ..Default::default()
        };
        let back = LossBundle::from_values(&b.values()).unwrap();
        assert_eq!(back.s_w, 0.25);
        assert_eq!(b.first_non_finite(), Some("L_c"));
    }
}
