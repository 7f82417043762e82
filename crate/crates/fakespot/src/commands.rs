//! Command entry points shared by the CLI binary and the examples. Each
//! command validates its inputs up front, writes outputs atomically, and is
//! deterministic given the same config and data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::data::{default_label_map, load_png, load_png_tree, split_from_parts, DatasetSplit, LabeledImage};
use crate::diffusion::{linear_schedule, noisify, DEFAULT_BETA_END, DEFAULT_BETA_START};
use crate::gradcam::explain_batch;
use crate::metrics::{evaluate, MetricsReport};
use crate::nn::{Model, ModelTopology};
use crate::rng::SeededRng;
use crate::search::{
    emit_tables, enumerate_stage1, enumerate_stage2, run_grid, select_final, select_stage1_winner,
    GridPoint, SelectionCriterion,
};
use crate::training::{train, EpochStats};
use crate::Error;

/// Load the `<root>/{train,test}/{REAL,FAKE}` PNG tree.
pub fn load_dataset(data_root: &Path, lenient: bool) -> Result<DatasetSplit, Error> {
    for sub in ["train", "test"] {
        let dir = data_root.join(sub);
        if !dir.is_dir() {
            return Err(Error::Dataset(format!(
                "missing dataset directory {}",
                dir.display()
            )));
        }
    }
    let map = default_label_map();
    let train = load_png_tree(data_root.join("train"), &map, lenient)?;
    let test = load_png_tree(data_root.join("test"), &map, lenient)?;
    if test.is_empty() {
        return Err(Error::Dataset(format!(
            "no test images under {}",
            data_root.join("test").display()
        )));
    }
    Ok(split_from_parts(train, test))
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub struct TrainOutput {
    pub model: Model<f32>,
    pub log: Vec<EpochStats>,
    pub checkpoint_path: PathBuf,
    pub epoch_log_path: PathBuf,
}

/// Train per the config on a pre-loaded split: echoes the config, appends
/// one CSV row per epoch, and writes the final checkpoint.
pub fn cmd_train_on(config: &RunConfig, split: &DatasetSplit) -> Result<TrainOutput, Error> {
    config.validate()?;
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    write_atomic(&out_dir.join("config.txt"), config.to_key_values().as_bytes())?;

    let topology = ModelTopology::new(&config.conv_filters, &config.dense_units)?;
    let epoch_log_path = out_dir.join("epochs.csv");
    // Fresh log per run; rows are appended as epochs complete.
    let mut log_file = fs::File::create(&epoch_log_path)
        .map_err(|e| Error::io(epoch_log_path.display().to_string(), e))?;
    writeln!(log_file, "{}", EpochStats::csv_header())
        .map_err(|e| Error::io(epoch_log_path.display().to_string(), e))?;

    let (model, log) = train(&topology, split, &config.train_config(), |stats| {
        let _ = writeln!(log_file, "{}", stats.csv_row());
        println!(
            "epoch {:>3}: train_loss {:.4} val_loss {:.4} val_acc {:.4}",
            stats.epoch, stats.train_loss, stats.val.mean_loss, stats.val.accuracy
        );
    })?;
    drop(log_file);

    let checkpoint_path = out_dir.join("model.fspt");
    save_checkpoint(&model, &checkpoint_path)?;
    Ok(TrainOutput {
        model,
        log,
        checkpoint_path,
        epoch_log_path,
    })
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutput, Error> {
    let split = load_dataset(&config.data_root, false)?;
    cmd_train_on(config, &split)
}

/// Evaluate a checkpoint on the dataset's test folder; prints the report
/// and writes it as a CSV row.
pub fn cmd_evaluate(
    checkpoint: &Path,
    data_root: &Path,
    batch_size: usize,
    out_csv: Option<&Path>,
) -> Result<MetricsReport, Error> {
    let model = load_checkpoint(checkpoint)?;
    let split = load_dataset(data_root, false)?;
    let report = evaluate(&model, &split.test, batch_size)?;
    println!(
        "accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} loss {:.4} (tp {} fp {} tn {} fn {})",
        report.accuracy,
        report.precision,
        report.recall,
        report.f1,
        report.mean_loss,
        report.counts.tp,
        report.counts.fp,
        report.counts.tn,
        report.counts.fn_
    );
    if let Some(path) = out_csv {
        let csv = format!("{}\n{}\n", MetricsReport::csv_header(), report.csv_row());
        write_atomic(path, csv.as_bytes())?;
    }
    Ok(report)
}

pub struct GridSearchOutput {
    pub records: Vec<crate::search::RunRecord>,
    pub winner: crate::search::GridStage1Point,
    pub summary_path: PathBuf,
    pub table_paths: Vec<PathBuf>,
}

/// The full two-stage protocol: run stage 1, select the minimum-loss conv
/// stack, run stage 2 on it, emit grid tables and a three-optima summary.
pub fn cmd_gridsearch_on(config: &RunConfig, split: &DatasetSplit) -> Result<GridSearchOutput, Error> {
    config.validate()?;
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    write_atomic(&out_dir.join("config.txt"), config.to_key_values().as_bytes())?;
    let records_path = out_dir.join("records.jsonl");
    let train_config = config.train_config();

    let stage1: Vec<GridPoint> = enumerate_stage1().into_iter().map(GridPoint::Stage1).collect();
    let stage1_records = run_grid(&stage1, split, &train_config, &records_path)?;
    let winner = select_stage1_winner(&stage1_records)?;
    println!("stage-1 winner: {} filters x {} layers", winner.filters, winner.conv_layers);

    let stage2: Vec<GridPoint> = enumerate_stage2(winner).into_iter().map(GridPoint::Stage2).collect();
    let stage2_records = run_grid(&stage2, split, &train_config, &records_path)?;

    let mut records = stage1_records;
    records.extend(stage2_records.iter().cloned());
    let table_paths = emit_tables(&records, out_dir)?;

    let mut summary = String::new();
    for (name, criterion) in [
        ("min_loss", SelectionCriterion::MinLoss),
        ("max_accuracy", SelectionCriterion::MaxAccuracy),
        ("max_f1", SelectionCriterion::MaxF1),
    ] {
        let best = select_final(&stage2_records, criterion)?;
        let m = best.metrics.unwrap();
        summary.push_str(&format!(
            "{name}: {} (loss {:.4}, accuracy {:.4}, f1 {:.4})\n",
            best.point.id(),
            m.mean_loss,
            m.accuracy,
            m.f1
        ));
    }
    print!("{summary}");
    let summary_path = out_dir.join("summary.txt");
    write_atomic(&summary_path, summary.as_bytes())?;

    Ok(GridSearchOutput {
        records,
        winner,
        summary_path,
        table_paths,
    })
}

pub fn cmd_gridsearch(config: &RunConfig) -> Result<GridSearchOutput, Error> {
    let split = load_dataset(&config.data_root, false)?;
    cmd_gridsearch_on(config, &split)
}

/// Grad-CAM overlays and heatmaps for a set of image files. `layer` of
/// `None` targets the last conv layer.
pub fn cmd_explain(
    checkpoint: &Path,
    image_paths: &[PathBuf],
    layer: Option<usize>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, Error> {
    let model = load_checkpoint(checkpoint)?;
    let n_conv = model.topology.conv_layers.len();
    let layer = layer.unwrap_or(n_conv - 1);
    if layer >= n_conv {
        return Err(Error::InvalidArgument(format!(
            "layer index {layer} invalid; valid indices: 0..{n_conv}"
        )));
    }
    let mut images = Vec::with_capacity(image_paths.len());
    for path in image_paths {
        images.push(LabeledImage {
            pixels: load_png(path)?,
            label: 0,
            source_id: path.display().to_string(),
        });
    }
    explain_batch(&model, &images, layer, out_dir, false)
}

/// Forward-noise image files to step `t` of a linear schedule and write
/// the results as PNGs.
pub fn cmd_noisify(
    image_paths: &[PathBuf],
    t: usize,
    steps: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, Error> {
    let schedule = linear_schedule(steps, DEFAULT_BETA_START, DEFAULT_BETA_END)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut rng = SeededRng::new(seed);
    let mut written = Vec::new();
    for path in image_paths {
        let x0 = load_png(path)?;
        let (xt, _) = noisify(&x0, t, &schedule, &mut rng)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        let out_path = out_dir.join(format!("{stem}.t{t}.png"));
        let mut img = image::RgbImage::new(32, 32);
        for y in 0..32 {
            for x in 0..32 {
                let px = [
                    (xt.get(0, 0, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                    (xt.get(0, 1, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                    (xt.get(0, 2, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                ];
                img.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        let tmp = out_path.with_extension("tmp.png");
        img.save(&tmp).map_err(|e| Error::Image(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, &out_path).map_err(|e| Error::io(out_path.display().to_string(), e))?;
        written.push(out_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_square_corpus, make_split};

    fn sanity_split() -> DatasetSplit {
        let mut rng = SeededRng::new(2);
        let corpus = generate_square_corpus(30, &mut rng);
        make_split(corpus.images, 0.2, &mut rng).unwrap()
    }

    fn small_config(out: &Path) -> RunConfig {
        RunConfig {
            conv_filters: vec![4],
            dense_units: vec![],
            epochs: 1,
            batch_size: 16,
            output_dir: out.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn train_writes_log_checkpoint_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let split = sanity_split();
        let out = cmd_train_on(&config, &split).unwrap();
        assert!(out.checkpoint_path.exists());
        let log = fs::read_to_string(&out.epoch_log_path).unwrap();
        assert_eq!(log.lines().count(), 1 + config.epochs);
        assert!(dir.path().join("config.txt").exists());
    }

    #[test]
    fn train_missing_data_root_fails_fast() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path());
        config.data_root = dir.path().join("nope");
        assert!(matches!(cmd_train(&config), Err(Error::Dataset(_))));
    }

    #[test]
    fn evaluate_matches_final_train_row() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let split = sanity_split();
        let out = cmd_train_on(&config, &split).unwrap();
        let report = evaluate(&out.model, &split.test, config.batch_size).unwrap();
        let last = out.log.last().unwrap();
        assert_eq!(report, last.val);
    }

    #[test]
    fn noisify_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let png = dir.path().join("in.png");
        image::RgbImage::from_pixel(32, 32, image::Rgb([120, 60, 200]))
            .save(&png)
            .unwrap();
        let out = cmd_noisify(&[png], 25, 50, 1, &dir.path().join("out")).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].exists());
    }
}
