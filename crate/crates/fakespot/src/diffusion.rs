//! Forward-diffusion noising and the noise-prediction loss, usable without
//! any denoiser model.

use crate::rng::SeededRng;
use crate::tensor::Tensor4;
use crate::Error;

/// Variance schedule: per-step `beta` and cumulative `alpha_bar`.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// `alpha_bar` at 1-based step `t`.
    pub fn alpha_bar_at(&self, t: usize) -> Result<f64, Error> {
        if t < 1 || t > self.steps() {
            return Err(Error::InvalidArgument(format!(
                "step {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(self.alpha_bar[t - 1])
    }
}

/// Linearly interpolated beta schedule with cumulative-product alpha_bar.
pub fn linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule, Error> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for &b in &beta {
        acc *= 1.0 - b;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { beta, alpha_bar })
}

pub fn default_schedule() -> NoiseSchedule {
    linear_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).unwrap()
}

/// Mix a clean image with a given noise tensor:
/// `x_t = sqrt(abar) * x0 + sqrt(1 - abar) * eps`.
pub fn noisify_with(x0: &Tensor4<f32>, alpha_bar: f64, eps: &Tensor4<f32>) -> Result<Tensor4<f32>, Error> {
    if x0.shape() != eps.shape() {
        return Err(Error::ShapeMismatch("x0 and eps shapes differ".into()));
    }
    let signal = alpha_bar.sqrt() as f32;
    let noise = (1.0 - alpha_bar).sqrt() as f32;
    let data = x0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| signal * x + noise * e)
        .collect();
    Tensor4::from_values(x0.shape(), data)
}

/// Noise `x0` to step `t` (1-based), drawing `eps` from the RNG. Returns
/// both the noised tensor and the exact noise drawn so the prediction loss
/// can be evaluated against it.
pub fn noisify(
    x0: &Tensor4<f32>,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<(Tensor4<f32>, Tensor4<f32>), Error> {
    let abar = schedule.alpha_bar_at(t)?;
    let eps: Tensor4<f32> = rng.sample_normal(x0.shape(), 0.0, 1.0)?;
    let xt = noisify_with(x0, abar, &eps)?;
    Ok((xt, eps))
}

/// Mean squared difference between the true and predicted noise.
pub fn diffusion_loss(eps_true: &Tensor4<f32>, eps_pred: &Tensor4<f32>) -> Result<f64, Error> {
    if eps_true.shape() != eps_pred.shape() {
        return Err(Error::ShapeMismatch("noise tensor shapes differ".into()));
    }
    let n = eps_true.len() as f64;
    let sum: f64 = eps_true
        .data()
        .iter()
        .zip(eps_pred.data())
        .map(|(&a, &b)| {
            let d = (a - b) as f64;
            d * d
        })
        .sum();
    Ok(sum / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_schedule() {
        let s = linear_schedule(1, 1e-4, 0.02).unwrap();
        assert_eq!(s.beta, vec![1e-4]);
        assert!((s.alpha_bar[0] - (1.0 - 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn default_alpha_bar_strictly_decreasing() {
        let s = default_schedule();
        assert_eq!(s.steps(), 50);
        for w in s.alpha_bar.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(linear_schedule(0, 1e-4, 0.02).is_err());
    }

    #[test]
    fn bad_beta_bounds_rejected() {
        assert!(linear_schedule(10, 0.0, 0.02).is_err());
        assert!(linear_schedule(10, 0.5, 0.2).is_err());
        assert!(linear_schedule(10, 0.5, 1.0).is_err());
    }

    #[test]
    fn alpha_bar_one_keeps_signal() {
        let x0 = Tensor4::from_values((1, 1, 1, 2), vec![0.3f32, -1.2]).unwrap();
        let eps = Tensor4::constant((1, 1, 1, 2), 5.0f32);
        let xt = noisify_with(&x0, 1.0, &eps).unwrap();
        assert_eq!(xt, x0);
    }

    #[test]
    fn alpha_bar_zero_is_pure_noise() {
        let x0 = Tensor4::constant((1, 1, 1, 2), 9.0f32);
        let eps = Tensor4::from_values((1, 1, 1, 2), vec![0.5f32, -0.5]).unwrap();
        let xt = noisify_with(&x0, 0.0, &eps).unwrap();
        assert_eq!(xt, eps);
    }

    #[test]
    fn quarter_alpha_bar_hand_value() {
        // abar=0.25, x0=2, eps=2 -> 0.5*2 + sqrt(0.75)*2
        let x0 = Tensor4::constant((1, 1, 1, 1), 2.0f32);
        let eps = Tensor4::constant((1, 1, 1, 1), 2.0f32);
        let xt = noisify_with(&x0, 0.25, &eps).unwrap();
        let expect = 0.5 * 2.0 + 0.75f64.sqrt() * 2.0;
        assert!((xt.data()[0] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn noisify_step_bounds() {
        let s = default_schedule();
        let x0 = Tensor4::zeros((1, 1, 2, 2));
        let mut rng = SeededRng::new(1);
        assert!(noisify(&x0, 0, &s, &mut rng).is_err());
        assert!(noisify(&x0, 51, &s, &mut rng).is_err());
        assert!(noisify(&x0, 50, &s, &mut rng).is_ok());
    }

    #[test]
    fn noisify_deterministic() {
        let s = default_schedule();
        let x0 = Tensor4::constant((1, 3, 4, 4), 0.5f32);
        let a = noisify(&x0, 25, &s, &mut SeededRng::new(4)).unwrap();
        let b = noisify(&x0, 25, &s, &mut SeededRng::new(4)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn loss_zero_iff_equal() {
        let a = Tensor4::from_values((1, 1, 1, 2), vec![1.0f32, 3.0]).unwrap();
        assert_eq!(diffusion_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn loss_constant_square() {
        let t = Tensor4::zeros((1, 1, 2, 2));
        let p = Tensor4::constant((1, 1, 2, 2), 2.0f32);
        assert!((diffusion_loss(&t, &p).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn loss_hand_value() {
        let t = Tensor4::from_values((1, 1, 1, 2), vec![1.0f32, 3.0]).unwrap();
        let p = Tensor4::from_values((1, 1, 1, 2), vec![2.0f32, 1.0]).unwrap();
        assert!((diffusion_loss(&t, &p).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn variance_preserved() {
        // x0, eps ~ N(0,1): Var(x_t) = abar + (1 - abar) = 1.
        let mut rng = SeededRng::new(11);
        let n = 100_000;
        for abar in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let x0: Tensor4<f32> = rng.sample_normal((1, 1, 1, n), 0.0, 1.0).unwrap();
            let eps: Tensor4<f32> = rng.sample_normal((1, 1, 1, n), 0.0, 1.0).unwrap();
            let xt = noisify_with(&x0, abar, &eps).unwrap();
            let mean: f64 = xt.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            let var: f64 = xt
                .data()
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            assert!((var - 1.0).abs() < 0.03, "abar={abar} var={var}");
        }
    }
}
