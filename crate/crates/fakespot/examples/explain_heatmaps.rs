//! Train on the square corpus, then render Grad-CAM overlays and heatmaps
//! for a few held-out images. The bright square is the discriminative
//! feature, so the hot region should concentrate on or around it.
//!
//!     cargo run --release --example explain_heatmaps

use fakespot::data::{generate_square_corpus, split_from_parts, REAL};
use fakespot::gradcam::explain_batch;
use fakespot::nn::ModelTopology;
use fakespot::rng::SeededRng;
use fakespot::training::{train, TrainConfig};

fn main() -> Result<(), fakespot::Error> {
    let rng = SeededRng::new(9);
    let train_part = generate_square_corpus(500, &mut rng.split(0));
    let test_part = generate_square_corpus(100, &mut rng.split(1));
    let squares = test_part.squares.clone();
    let split = split_from_parts(train_part.images, test_part.images);

    let topology = ModelTopology::new(&[32, 32], &[64])?;
    let config = TrainConfig {
        seed: 2,
        epochs: 3,
        batch_size: 32,
        learning_rate: 1e-3,
    };
    let (model, log) = train(&topology, &split, &config, |_| {})?;
    println!("trained to accuracy {:.4}", log.last().unwrap().val.accuracy);

    // Explain a handful of square-bearing test images at the last conv layer.
    let picks: Vec<_> = split
        .test
        .images
        .iter()
        .zip(&squares)
        .filter(|(img, _)| img.label == REAL)
        .take(6)
        .collect();
    for (img, square) in &picks {
        let (r, c) = square.unwrap();
        println!("{}: square top-left at ({r},{c})", img.source_id);
    }

    let images: Vec<_> = picks.into_iter().map(|(img, _)| img.clone()).collect();
    let out_dir = "target/examples/explain_heatmaps";
    let written = explain_batch(&model, &images, topology.conv_layers.len() - 1, out_dir, true)?;
    println!("wrote {} files under {out_dir}:", written.len());
    for path in written {
        println!("  {}", path.display());
    }
    Ok(())
}
