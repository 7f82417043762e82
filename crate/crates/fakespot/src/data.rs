//! Dataset ingestion: CIFAR-10 binary records (the REAL class), PNG
//! directory trees, stratified splitting, shuffled batching, and a
//! generated two-class corpus for dataset-free sanity runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::imageops::FilterType;

use crate::rng::SeededRng;
use crate::tensor::Tensor4;
use crate::Error;

pub const FAKE: u8 = 0;
pub const REAL: u8 = 1;

/// CIFAR-10 binary record: 1 class byte + 3072 pixel bytes (R,G,B planes).
pub const CIFAR_RECORD_LEN: usize = 3073;

/// A single 32x32 RGB image with pixels in `[0, 1]`, stored `(1, 3, 32, 32)`.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub pixels: Tensor4<f32>,
    pub label: u8,
    pub source_id: String,
}

/// One side of a train/test split.
#[derive(Debug, Clone, Default)]
pub struct DatasetPart {
    pub images: Vec<LabeledImage>,
}

impl DatasetPart {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let real = self.images.iter().filter(|i| i.label == REAL).count();
        (self.images.len() - real, real)
    }

    /// Batches in stored order (used for evaluation). The final short batch
    /// is kept.
    pub fn sequential_batches(&self, batch_size: usize) -> Vec<(Tensor4<f32>, Vec<f32>)> {
        assert!(batch_size >= 1);
        self.images
            .chunks(batch_size)
            .map(collate)
            .collect()
    }

    /// Epoch-level reshuffled batches from the seeded RNG. The final short
    /// batch is kept.
    pub fn shuffled_batches(
        &self,
        batch_size: usize,
        rng: &mut SeededRng,
    ) -> Vec<(Tensor4<f32>, Vec<f32>)> {
        assert!(batch_size >= 1);
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        rng.shuffle(&mut order);
        order
            .chunks(batch_size)
            .map(|idxs| {
                let items: Vec<&LabeledImage> = idxs.iter().map(|&i| &self.images[i]).collect();
                collate_refs(&items)
            })
            .collect()
    }
}

fn collate(items: &[LabeledImage]) -> (Tensor4<f32>, Vec<f32>) {
    let refs: Vec<&LabeledImage> = items.iter().collect();
    collate_refs(&refs)
}

fn collate_refs(items: &[&LabeledImage]) -> (Tensor4<f32>, Vec<f32>) {
    let n = items.len();
    let (_, c, h, w) = items[0].pixels.shape();
    let mut data = Vec::with_capacity(n * c * h * w);
    let mut labels = Vec::with_capacity(n);
    for img in items {
        data.extend_from_slice(img.pixels.data());
        labels.push(img.label as f32);
    }
    (Tensor4::from_values((n, c, h, w), data).unwrap(), labels)
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: DatasetPart,
    pub test: DatasetPart,
}

/// Read standard CIFAR-10 binary records, forcing the binary label to
/// REAL = 1. The original 10-class byte is retained in `source_id`.
pub fn load_cifar10_binary(path: impl AsRef<Path>) -> Result<Vec<LabeledImage>, Error> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::Dataset(format!(
            "{}: length {} is not a positive multiple of {CIFAR_RECORD_LEN}",
            path.display(),
            bytes.len()
        )));
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD_LEN);
    for (idx, record) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let class_byte = record[0];
        let data: Vec<f32> = record[1..].iter().map(|&b| b as f32 / 255.0).collect();
        images.push(LabeledImage {
            pixels: Tensor4::from_values((1, 3, 32, 32), data)?,
            label: REAL,
            source_id: format!("{}#{}:class{}", path.display(), idx, class_byte),
        });
    }
    Ok(images)
}

/// Decode one PNG (RGB or RGBA; alpha dropped) into a normalized 32x32
/// tensor, bilinearly resizing when needed.
pub fn load_png(path: impl AsRef<Path>) -> Result<Tensor4<f32>, Error> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let img = if img.width() != 32 || img.height() != 32 {
        img.resize_exact(32, 32, FilterType::Triangle)
    } else {
        img
    };
    let rgb = img.to_rgb8();
    let mut data = vec![0.0f32; 3 * 32 * 32];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            data[c * 1024 + (y as usize) * 32 + x as usize] = px[c] as f32 / 255.0;
        }
    }
    Tensor4::from_values((1, 3, 32, 32), data)
}

/// Load a directory tree where each subdirectory name maps to a binary
/// label (conventionally `FAKE` -> 0, `REAL` -> 1). Files are visited in
/// lexicographic order for cross-platform determinism.
pub fn load_png_tree(
    root: impl AsRef<Path>,
    label_map: &BTreeMap<String, u8>,
    lenient: bool,
) -> Result<Vec<LabeledImage>, Error> {
    let root = root.as_ref();
    let mut dirs: Vec<(String, u8)> = Vec::new();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root.display().to_string(), e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root.display().to_string(), e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    for name in names {
        match label_map.get(&name) {
            Some(&label) => dirs.push((name, label)),
            None => {
                return Err(Error::Dataset(format!(
                    "unknown directory '{name}' under {} (expected one of {:?})",
                    root.display(),
                    label_map.keys().collect::<Vec<_>>()
                )))
            }
        }
    }
    let mut images = Vec::new();
    for (dir, label) in dirs {
        let dir_path = root.join(&dir);
        let mut files: Vec<_> = fs::read_dir(&dir_path)
            .map_err(|e| Error::io(dir_path.display().to_string(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            match load_png(&file) {
                Ok(pixels) => images.push(LabeledImage {
                    pixels,
                    label,
                    source_id: file.display().to_string(),
                }),
                Err(e) if lenient => {
                    eprintln!("warning: skipping {}: {e}", file.display());
                }
                Err(e) => return Err(e),
            }
        }
    }
    if images.is_empty() {
        eprintln!("warning: no images found under {}", root.display());
    }
    Ok(images)
}

/// Label map for the published `{REAL, FAKE}` directory convention.
pub fn default_label_map() -> BTreeMap<String, u8> {
    BTreeMap::from([("FAKE".to_string(), FAKE), ("REAL".to_string(), REAL)])
}

/// Stratified train/test split, deterministic given the RNG seed.
pub fn make_split(
    images: Vec<LabeledImage>,
    test_fraction: f64,
    rng: &mut SeededRng,
) -> Result<DatasetSplit, Error> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {test_fraction} outside [0, 1]"
        )));
    }
    let mut by_class: [Vec<LabeledImage>; 2] = [Vec::new(), Vec::new()];
    for img in images {
        by_class[img.label as usize].push(img);
    }
    let mut split = DatasetSplit::default();
    for class in by_class.iter_mut() {
        let n_test = (class.len() as f64 * test_fraction).round() as usize;
        if test_fraction > 0.0 && !class.is_empty() && n_test == 0 {
            return Err(Error::Dataset(format!(
                "class with {} images cannot supply a {test_fraction} test fraction",
                class.len()
            )));
        }
        let mut order: Vec<usize> = (0..class.len()).collect();
        rng.shuffle(&mut order);
        let test_idx: std::collections::BTreeSet<usize> =
            order[..n_test].iter().copied().collect();
        for (i, img) in class.drain(..).enumerate() {
            if test_idx.contains(&i) {
                split.test.images.push(img);
            } else {
                split.train.images.push(img);
            }
        }
    }
    Ok(split)
}

/// Build a split directly from pre-separated train/test collections (the
/// published dataset ships its own folders).
pub fn split_from_parts(train: Vec<LabeledImage>, test: Vec<LabeledImage>) -> DatasetSplit {
    DatasetSplit {
        train: DatasetPart { images: train },
        test: DatasetPart { images: test },
    }
}

/// Generated sanity corpus: class 0 is Gaussian noise texture, class 1 is
/// the same noise plus a bright 8x8 square at a random position.
pub struct SquareCorpus {
    pub images: Vec<LabeledImage>,
    /// Top-left `(row, col)` of the square for class-1 images, else `None`.
    pub squares: Vec<Option<(usize, usize)>>,
}

pub const SQUARE_SIZE: usize = 8;

pub fn generate_square_corpus(n_per_class: usize, rng: &mut SeededRng) -> SquareCorpus {
    let mut images = Vec::with_capacity(2 * n_per_class);
    let mut squares = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let label = (i % 2) as u8;
        let mut data = vec![0.0f32; 3 * 32 * 32];
        for v in data.iter_mut() {
            *v = (0.35 + 0.15 * rng.normal() as f32).clamp(0.0, 1.0);
        }
        let square = if label == REAL {
            let r = rng.uniform_index(32 - SQUARE_SIZE + 1);
            let c = rng.uniform_index(32 - SQUARE_SIZE + 1);
            for ch in 0..3 {
                for dr in 0..SQUARE_SIZE {
                    for dc in 0..SQUARE_SIZE {
                        data[ch * 1024 + (r + dr) * 32 + (c + dc)] = 1.0;
                    }
                }
            }
            Some((r, c))
        } else {
            None
        };
        images.push(LabeledImage {
            pixels: Tensor4::from_values((1, 3, 32, 32), data).unwrap(),
            label,
            source_id: format!("synthetic#{i}"),
        });
        squares.push(square);
    }
    SquareCorpus { images, squares }
}
