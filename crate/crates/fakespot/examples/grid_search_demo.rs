//! The two-stage architecture search on a deliberately tiny corpus: stage 1
//! sweeps convolutional filter counts and depths (12 networks), the
//! minimum-loss winner's conv stack is frozen, and stage 2 sweeps the dense
//! stack on top of it (24 networks). Keeps epochs and data small so all 36
//! trainings finish in a couple of minutes.
//!
//!     cargo run --release --example grid_search_demo

use fakespot::commands::cmd_gridsearch_on;
use fakespot::config::RunConfig;
use fakespot::data::{generate_square_corpus, split_from_parts};
use fakespot::rng::SeededRng;

fn main() -> Result<(), fakespot::Error> {
    let rng = SeededRng::new(9);
    let train = generate_square_corpus(40, &mut rng.split(0));
    let test = generate_square_corpus(20, &mut rng.split(1));
    let split = split_from_parts(train.images, test.images);

    let config = RunConfig {
        epochs: 1,
        batch_size: 16,
        output_dir: "target/examples/grid_search_demo".into(),
        ..RunConfig::default()
    };

    let out = cmd_gridsearch_on(&config, &split)?;
    println!(
        "ran {} networks; stage-1 winner {} filters x {} layers",
        out.records.len(),
        out.winner.filters,
        out.winner.conv_layers
    );
    println!("summary: {}", out.summary_path.display());
    for path in &out.table_paths {
        println!("table:   {}", path.display());
    }
    Ok(())
}
