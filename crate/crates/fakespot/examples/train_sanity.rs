//! Train a small network on the generated square-detection corpus and
//! write the usual run artifacts (config echo, epoch CSV, checkpoint).
//!
//!     cargo run --release --example train_sanity

use fakespot::commands::cmd_train_on;
use fakespot::config::RunConfig;
use fakespot::data::{generate_square_corpus, split_from_parts};
use fakespot::rng::SeededRng;

fn main() -> Result<(), fakespot::Error> {
    let rng = SeededRng::new(9);
    let train = generate_square_corpus(500, &mut rng.split(0));
    let test = generate_square_corpus(100, &mut rng.split(1));
    let split = split_from_parts(train.images, test.images);

    let config = RunConfig {
        conv_filters: vec![32, 32],
        dense_units: vec![64],
        epochs: 3,
        output_dir: "target/examples/train_sanity".into(),
        ..RunConfig::default()
    };

    let out = cmd_train_on(&config, &split)?;
    let last = out.log.last().unwrap();
    println!(
        "final: accuracy {:.4}, loss {:.4}",
        last.val.accuracy, last.val.mean_loss
    );
    println!("checkpoint: {}", out.checkpoint_path.display());
    println!("epoch log:  {}", out.epoch_log_path.display());
    Ok(())
}
