use candle_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Architecture, Condition, DiffusionSchedule, ReactionDenoiser};
use crate::error::{bail_validation, Result};
use crate::nn::Ctx;

/// Anything that predicts clean reactor features from a noised reactor.
pub trait X0Predictor {
    fn predict_x0(&self, x_t: &Tensor, t: &[usize], actor: &Tensor, cond: &Condition) -> Result<Tensor>;

    /// Post-processing applied to each x0 prediction while sampling.
    fn clamp_x0(&self, x0: Tensor) -> Result<Tensor> {
        Ok(x0)
    }

    /// Whether the actor is forward-noised to the current timestep.
    fn noises_actor(&self) -> bool {
        false
    }
}

impl X0Predictor for ReactionDenoiser {
    fn predict_x0(&self, x_t: &Tensor, t: &[usize], actor: &Tensor, cond: &Condition) -> Result<Tensor> {
        self.forward(x_t, t, actor, cond, &mut Ctx::eval())
    }

    fn clamp_x0(&self, x0: Tensor) -> Result<Tensor> {
        ReactionDenoiser::clamp_x0(self, &x0)
    }

    fn noises_actor(&self) -> bool {
        self.architecture() == Architecture::NonFixed
    }
}

/// Standard normal tensor shaped like `like`, drawn from `rng`.
pub fn gaussian_like(like: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let data: Vec<f64> = (0..like.elem_count()).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::from_vec(data, like.shape(), like.device())?.to_dtype(like.dtype())?)
}

fn actor_at<P: X0Predictor + ?Sized>(
    predictor: &P,
    schedule: &DiffusionSchedule,
    actor: &Tensor,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    if predictor.noises_actor() {
        let b = actor.dim(0)?;
        schedule.q_sample_tensor(actor, &vec![t; b], &gaussian_like(actor, rng)?)
    } else {
        Ok(actor.clone())
    }
}

/// Ancestral sampling with the x0-parameterised posterior
/// `q(x_{t-1} | x_t, x0)`; no noise is added on the final step.
pub fn sample_ddpm<P: X0Predictor + ?Sized>(
    predictor: &P,
    schedule: &DiffusionSchedule,
    actor: &Tensor,
    cond: &Condition,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let b = actor.dim(0)?;
    let mut x = gaussian_like(actor, rng)?;
    for t in (1..=schedule.steps()).rev() {
        let a_in = actor_at(predictor, schedule, actor, t, rng)?;
        let x0 = predictor.clamp_x0(predictor.predict_x0(&x, &vec![t; b], &a_in, cond)?)?;
        let ab = schedule.alpha_bar(t);
        let ab_prev = schedule.alpha_bar(t - 1);
        let beta = schedule.beta(t);
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ct = schedule.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let mean = ((x0 * c0)? + (&x * ct)?)?;
        x = if t > 1 {
            let var = beta * (1.0 - ab_prev) / (1.0 - ab);
            (mean + (gaussian_like(actor, rng)? * var.sqrt())?)?.detach()
        } else {
            mean.detach()
        };
    }
    Ok(x)
}

/// Timesteps `floor(k T / S)` for `k = S..1`, strictly decreasing.
pub fn ddim_timesteps(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        bail_validation!("DDIM steps must lie in 1..={total}, got {steps}");
    }
    Ok((1..=steps).rev().map(|k| k * total / steps).collect())
}

/// Deterministic DDIM (eta = 0); `rng` only draws the initial noise (and
/// the actor noise of non-fixed models).
pub fn sample_ddim<P: X0Predictor + ?Sized>(
    predictor: &P,
    schedule: &DiffusionSchedule,
    actor: &Tensor,
    cond: &Condition,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let b = actor.dim(0)?;
    let taus = ddim_timesteps(schedule.steps(), steps)?;
    let mut x = gaussian_like(actor, rng)?;
    for (k, &t) in taus.iter().enumerate() {
        let prev = taus.get(k + 1).copied().unwrap_or(0);
        let a_in = actor_at(predictor, schedule, actor, t, rng)?;
        let x0 = predictor.clamp_x0(predictor.predict_x0(&x, &vec![t; b], &a_in, cond)?)?;
        let ab = schedule.alpha_bar(t);
        let ab_prev = schedule.alpha_bar(prev);
        x = if prev == 0 {
            x0.detach()
        } else {
            let eps = ((&x - (&x0 * ab.sqrt())?)? / (1.0 - ab).sqrt())?;
            ((x0 * ab_prev.sqrt())? + (eps * (1.0 - ab_prev).sqrt())?)?.detach()
        };
    }
    Ok(x)
}
