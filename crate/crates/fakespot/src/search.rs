//! Two-stage topology grid search: 12 feature-extractor configurations,
//! then 24 dense-head configurations on the stage-1 winner, 36 networks
//! total.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::metrics::MetricsReport;
use crate::nn::ModelTopology;
use crate::training::{train, TrainConfig};
use crate::Error;

pub const STAGE1_FILTERS: [usize; 4] = [16, 32, 64, 128];
pub const STAGE2_UNITS: [usize; 8] = [32, 64, 128, 256, 512, 1024, 2048, 4096];
pub const LAYER_COUNTS: [usize; 3] = [1, 2, 3];

/// Conv stack benchmarked alone: the flattened features feed the output
/// neuron directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridStage1Point {
    pub filters: usize,
    pub conv_layers: usize,
}

impl GridStage1Point {
    pub fn id(&self) -> String {
        format!("stage1_f{}_l{}", self.filters, self.conv_layers)
    }

    pub fn topology(&self) -> Result<ModelTopology, Error> {
        ModelTopology::new(&vec![self.filters; self.conv_layers], &[])
    }
}

/// The stage-1 winner conv stack with a dense head under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridStage2Point {
    pub conv: GridStage1Point,
    pub units: usize,
    pub dense_layers: usize,
}

impl GridStage2Point {
    pub fn id(&self) -> String {
        format!("stage2_u{}_l{}", self.units, self.dense_layers)
    }

    pub fn topology(&self) -> Result<ModelTopology, Error> {
        ModelTopology::new(
            &vec![self.conv.filters; self.conv.conv_layers],
            &vec![self.units; self.dense_layers],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridPoint {
    Stage1(GridStage1Point),
    Stage2(GridStage2Point),
}

impl GridPoint {
    pub fn id(&self) -> String {
        match self {
            GridPoint::Stage1(p) => p.id(),
            GridPoint::Stage2(p) => p.id(),
        }
    }

    pub fn topology(&self) -> Result<ModelTopology, Error> {
        match self {
            GridPoint::Stage1(p) => p.topology(),
            GridPoint::Stage2(p) => p.topology(),
        }
    }

    /// Table row label: filter count for stage 1, unit count for stage 2.
    pub fn row(&self) -> usize {
        match self {
            GridPoint::Stage1(p) => p.filters,
            GridPoint::Stage2(p) => p.units,
        }
    }

    pub fn layers(&self) -> usize {
        match self {
            GridPoint::Stage1(p) => p.conv_layers,
            GridPoint::Stage2(p) => p.dense_layers,
        }
    }
}

/// The 12 stage-1 points in filters-major order.
pub fn enumerate_stage1() -> Vec<GridStage1Point> {
    let mut out = Vec::with_capacity(12);
    for &filters in &STAGE1_FILTERS {
        for &conv_layers in &LAYER_COUNTS {
            out.push(GridStage1Point { filters, conv_layers });
        }
    }
    out
}

/// The 24 stage-2 points in units-major order, all embedding the winner.
pub fn enumerate_stage2(winner: GridStage1Point) -> Vec<GridStage2Point> {
    let mut out = Vec::with_capacity(24);
    for &units in &STAGE2_UNITS {
        for &dense_layers in &LAYER_COUNTS {
            out.push(GridStage2Point {
                conv: winner,
                units,
                dense_layers,
            });
        }
    }
    out
}

/// One grid point's training outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub point: GridPoint,
    pub seed: u64,
    pub epochs: usize,
    /// Final validation metrics; absent when the run diverged.
    pub metrics: Option<MetricsReport>,
    pub seconds: f64,
    pub checkpoint_path: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.metrics.is_none()
    }
}

fn load_records(path: &Path) -> Result<Vec<RunRecord>, Error> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn append_record(path: &Path, record: &RunRecord) -> Result<(), Error> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(f, "{}", serde_json::to_string(record)?)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Train every grid point, appending records to the JSONL log as they
/// finish. Points whose id already appears in the log are skipped, so an
/// interrupted search resumes where it stopped. Diverged runs are recorded
/// as failed and the search continues.
pub fn run_grid(
    points: &[GridPoint],
    split: &DatasetSplit,
    config: &TrainConfig,
    records_path: &Path,
) -> Result<Vec<RunRecord>, Error> {
    let existing = load_records(records_path)?;
    let mut records = Vec::with_capacity(points.len());
    for point in points {
        if let Some(done) = existing.iter().find(|r| r.point.id() == point.id()) {
            records.push(done.clone());
            continue;
        }
        let topology = point.topology()?;
        let start = Instant::now();
        let record = match train(&topology, split, config, |_| {}) {
            Ok((_, log)) => RunRecord {
                point: *point,
                seed: config.seed,
                epochs: config.epochs,
                metrics: log.last().map(|s| s.val),
                seconds: start.elapsed().as_secs_f64(),
                checkpoint_path: None,
            },
            Err(Error::Diverged(msg)) => {
                eprintln!("warning: {} diverged: {msg}", point.id());
                RunRecord {
                    point: *point,
                    seed: config.seed,
                    epochs: config.epochs,
                    metrics: None,
                    seconds: start.elapsed().as_secs_f64(),
                    checkpoint_path: None,
                }
            }
            Err(e) => return Err(e),
        };
        append_record(records_path, &record)?;
        records.push(record);
    }
    Ok(records)
}

fn parameter_count(point: &GridPoint) -> usize {
    point
        .topology()
        .map(|t| t.parameter_count())
        .unwrap_or(usize::MAX)
}

fn successful(records: &[RunRecord]) -> Result<Vec<&RunRecord>, Error> {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| !r.failed()).collect();
    if ok.is_empty() {
        return Err(Error::Dataset("all grid runs failed".into()));
    }
    Ok(ok)
}

/// Minimum validation BCE; ties broken by fewer parameters, then lower
/// filter count.
pub fn select_stage1_winner(records: &[RunRecord]) -> Result<GridStage1Point, Error> {
    let ok = successful(records)?;
    let best = ok
        .into_iter()
        .min_by(|a, b| {
            let la = a.metrics.unwrap().mean_loss;
            let lb = b.metrics.unwrap().mean_loss;
            la.partial_cmp(&lb)
                .unwrap()
                .then(parameter_count(&a.point).cmp(&parameter_count(&b.point)))
                .then(a.point.row().cmp(&b.point.row()))
        })
        .unwrap();
    match best.point {
        GridPoint::Stage1(p) => Ok(p),
        GridPoint::Stage2(_) => Err(Error::InvalidArgument(
            "stage-2 record fed to stage-1 selection".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionCriterion {
    MinLoss,
    MaxAccuracy,
    MaxF1,
}

/// Optimum under the chosen criterion, same tie rules as stage 1.
pub fn select_final(
    records: &[RunRecord],
    criterion: SelectionCriterion,
) -> Result<RunRecord, Error> {
    let ok = successful(records)?;
    let key = |r: &RunRecord| -> f64 {
        let m = r.metrics.unwrap();
        match criterion {
            SelectionCriterion::MinLoss => m.mean_loss,
            SelectionCriterion::MaxAccuracy => -m.accuracy,
            SelectionCriterion::MaxF1 => -m.f1,
        }
    };
    Ok(ok
        .into_iter()
        .min_by(|a, b| {
            key(a)
                .partial_cmp(&key(b))
                .unwrap()
                .then(parameter_count(&a.point).cmp(&parameter_count(&b.point)))
                .then(a.point.row().cmp(&b.point.row()))
        })
        .unwrap()
        .clone())
}

/// Grid-shaped CSV per metric: first column the row label (filters or
/// units), header row the layer counts. Missing cells are written empty.
pub fn emit_tables(records: &[RunRecord], out_dir: &Path) -> Result<Vec<std::path::PathBuf>, Error> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let metrics: [(&str, fn(&MetricsReport) -> f64); 5] = [
        ("accuracy", |m| m.accuracy),
        ("loss", |m| m.mean_loss),
        ("precision", |m| m.precision),
        ("recall", |m| m.recall),
        ("f1", |m| m.f1),
    ];
    let mut written = Vec::new();
    for (stage_name, rows) in [
        ("stage1", STAGE1_FILTERS.to_vec()),
        ("stage2", STAGE2_UNITS.to_vec()),
    ] {
        let stage_records: Vec<&RunRecord> = records
            .iter()
            .filter(|r| {
                matches!(
                    (stage_name, &r.point),
                    ("stage1", GridPoint::Stage1(_)) | ("stage2", GridPoint::Stage2(_))
                )
            })
            .collect();
        if stage_records.is_empty() {
            continue;
        }
        for (metric_name, extract) in metrics {
            let mut csv = String::new();
            csv.push_str(&format!(
                "{},1,2,3\n",
                if stage_name == "stage1" { "filters" } else { "units" }
            ));
            for &row in &rows {
                csv.push_str(&row.to_string());
                for layers in LAYER_COUNTS {
                    csv.push(',');
                    let cell = stage_records
                        .iter()
                        .find(|r| r.point.row() == row && r.point.layers() == layers);
                    match cell.and_then(|r| r.metrics) {
                        Some(m) => csv.push_str(&format!("{:.6}", extract(&m))),
                        None => eprintln!(
                            "warning: missing {stage_name} cell ({row}, {layers}) in {metric_name} table"
                        ),
                    }
                }
                csv.push('\n');
            }
            let path = out_dir.join(format!("{stage_name}_{metric_name}.csv"));
            let tmp = path.with_extension("csv.tmp");
            fs::write(&tmp, &csv).map_err(|e| Error::io(tmp.display().to_string(), e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(path.display().to_string(), e))?;
            written.push(path);
        }
    }
    Ok(written)
}
