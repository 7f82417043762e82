//! Save a trained model, reload it from the checkpoint file, and confirm
//! the reloaded copy scores identically on held-out data.
//!
//!     cargo run --release --example evaluate_checkpoint

use fakespot::checkpoint::{load_checkpoint, save_checkpoint};
use fakespot::data::{generate_square_corpus, split_from_parts};
use fakespot::metrics::evaluate;
use fakespot::nn::ModelTopology;
use fakespot::rng::SeededRng;
use fakespot::training::{train, TrainConfig};

fn main() -> Result<(), fakespot::Error> {
    let rng = SeededRng::new(9);
    let train_part = generate_square_corpus(600, &mut rng.split(0));
    let test_part = generate_square_corpus(100, &mut rng.split(1));
    let split = split_from_parts(train_part.images, test_part.images);

    let topology = ModelTopology::new(&[16], &[32])?;
    let config = TrainConfig {
        seed: 1,
        epochs: 4,
        batch_size: 32,
        learning_rate: 1e-3,
    };
    let (model, _) = train(&topology, &split, &config, |_| {})?;
    let before = evaluate(&model, &split.test, 32)?;

    let path = std::path::Path::new("target/examples/evaluate_checkpoint/model.fspt");
    std::fs::create_dir_all(path.parent().unwrap()).expect("create output dir");
    save_checkpoint(&model, path)?;
    let reloaded = load_checkpoint(path)?;
    let after = evaluate(&reloaded, &split.test, 32)?;

    println!(
        "before save: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} loss {:.4}",
        before.accuracy, before.precision, before.recall, before.f1, before.mean_loss
    );
    println!(
        "after load:  accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} loss {:.4}",
        after.accuracy, after.precision, after.recall, after.f1, after.mean_loss
    );
    assert_eq!(before, after, "checkpoint round-trip changed the model");
    println!("round-trip exact: yes");
    Ok(())
}
