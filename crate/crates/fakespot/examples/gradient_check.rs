//! Verify the hand-derived backward pass against central finite
//! differences. The network is instantiated at f64 so the comparison is
//! limited by truncation error, not float precision.
//!
//!     cargo run --release --example gradient_check

use fakespot::nn::{Model, ModelTopology};
use fakespot::rng::SeededRng;
use fakespot::tensor::Tensor4;

const H: f64 = 1e-6;

fn main() -> Result<(), fakespot::Error> {
    let topology = ModelTopology::new(&[4, 4], &[8])?;
    let mut model: Model<f64> = Model::new(topology, 1)?;
    let mut rng = SeededRng::new(1).split(7);
    // Nudge every parameter off its init value so no ReLU input sits
    // exactly at the kink, where the two-sided difference is ill-defined.
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.05 * rng.normal();
        }
    }
    let batch: Tensor4<f64> = rng.sample_normal((2, 3, 32, 32), 0.0, 1.0)?;
    let labels = vec![1.0, 0.0];

    let (_, cache) = model.forward(&batch)?;
    let analytic = model.backward(&cache, &labels)?;
    let an: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();

    let loss = |m: &Model<f64>| -> f64 {
        let (probs, _) = m.forward(&batch).unwrap();
        m.batch_loss(&probs, &labels)
    };

    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for ti in 0..an.len() {
        // Sample a handful of coordinates per tensor to keep this quick.
        let len = an[ti].len();
        for k in 0..8.min(len) {
            let ei = if len <= 8 { k } else { rng.uniform_index(len) };
            let orig = model.params.tensors()[ti][ei];
            model.params.tensors_mut()[ti][ei] = orig + H;
            let lp = loss(&model);
            model.params.tensors_mut()[ti][ei] = orig - H;
            let lm = loss(&model);
            model.params.tensors_mut()[ti][ei] = orig;
            let fd = (lp - lm) / (2.0 * H);
            let a = an[ti][ei];
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-3);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    println!("checked {checked} parameter coordinates");
    println!("worst relative error: {worst:.3e}");
    assert!(worst <= 1e-4, "gradient mismatch");
    println!("analytic gradients agree with finite differences");
    Ok(())
}
