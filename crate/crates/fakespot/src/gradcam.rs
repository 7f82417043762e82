//! Grad-CAM: channel weights from globally average-pooled class-score
//! gradients, ReLU-clipped into a spatial heatmap, plus rendering.
//!
//! The single sigmoid output gives one logit `z`; class REAL uses `z` as
//! the class score and class FAKE uses `-z`, so both classes produce
//! meaningful maps.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::LabeledImage;
use crate::nn::{predict_label, Model};
use crate::tensor::Tensor4;
use crate::Error;

/// Post-ReLU feature maps of one conv layer and the class-score gradients
/// w.r.t. them, both shaped `(1, K, h, w)`.
#[derive(Debug, Clone)]
pub struct FeatureMapGradients {
    pub activations: Tensor4<f32>,
    pub gradients: Tensor4<f32>,
    pub layer_index: usize,
}

/// Spatial importance map for one image and target class.
#[derive(Debug, Clone)]
pub struct Heatmap {
    /// ReLU output at feature-map resolution; non-negative.
    pub raw: Tensor4<f32>,
    /// Min-max normalized to `[0, 1]`; an all-zero raw map stays zero.
    pub normalized: Tensor4<f32>,
    /// Bilinearly upsampled to the input resolution.
    pub upsampled: Tensor4<f32>,
    pub target_class: u8,
}

/// Run the model on one image and capture activations and gradients at the
/// chosen conv layer for the given target class.
pub fn capture_gradients(
    model: &Model<f32>,
    image: &Tensor4<f32>,
    target_class: u8,
    layer_index: usize,
) -> Result<FeatureMapGradients, Error> {
    if layer_index >= model.topology.conv_layers.len() {
        return Err(Error::InvalidArgument(format!(
            "layer index {layer_index} out of range (valid: 0..{})",
            model.topology.conv_layers.len()
        )));
    }
    let (_, cache) = model.forward(image)?;
    // Class score is the logit for REAL, its negation for FAKE.
    let sign = if target_class == 1 { 1.0 } else { -1.0 };
    let gradients = model.activation_gradient(&cache, &[sign], layer_index)?;
    Ok(FeatureMapGradients {
        activations: cache.conv_act[layer_index].clone(),
        gradients,
        layer_index,
    })
}

/// Channel weights `alpha_k = mean_ij(grad_k)` and the ReLU of the
/// weighted activation sum.
pub fn gradcam_map(fg: &FeatureMapGradients) -> Tensor4<f32> {
    let (_, k, h, w) = fg.activations.shape();
    let z = (h * w) as f32;
    let mut alphas = Vec::with_capacity(k);
    for ch in 0..k {
        let mut sum = 0.0f32;
        for i in 0..h {
            for j in 0..w {
                sum += fg.gradients.get(0, ch, i, j);
            }
        }
        alphas.push(sum / z);
    }
    let mut map = Tensor4::zeros((1, 1, h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0f32;
            for ch in 0..k {
                acc += alphas[ch] * fg.activations.get(0, ch, i, j);
            }
            map.set(0, 0, i, j, acc.max(0.0));
        }
    }
    map
}

/// Min-max normalize to `[0, 1]`. A constant nonzero map becomes all ones;
/// an all-zero map stays all zeros.
pub fn normalize_map(raw: &Tensor4<f32>) -> Tensor4<f32> {
    let max = raw.data().iter().cloned().fold(f32::MIN, f32::max);
    let min = raw.data().iter().cloned().fold(f32::MAX, f32::min);
    if max == 0.0 {
        return raw.clone();
    }
    if max == min {
        return Tensor4::constant(raw.shape(), 1.0);
    }
    raw.map_elementwise(|v| (v - min) / (max - min))
}

/// Bilinear upsample with corner alignment: output corners map exactly to
/// input corners. Single-channel `(1, 1, h, w)` maps only.
pub fn bilinear_upsample(map: &Tensor4<f32>, out_size: usize) -> Tensor4<f32> {
    let (_, _, h, w) = map.shape();
    let mut out = Tensor4::zeros((1, 1, out_size, out_size));
    for oy in 0..out_size {
        for ox in 0..out_size {
            let sy = if out_size > 1 {
                oy as f32 * (h - 1) as f32 / (out_size - 1) as f32
            } else {
                0.0
            };
            let sx = if out_size > 1 {
                ox as f32 * (w - 1) as f32 / (out_size - 1) as f32
            } else {
                0.0
            };
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fy = sy - y0 as f32;
            let fx = sx - x0 as f32;
            let v = map.get(0, 0, y0, x0) * (1.0 - fy) * (1.0 - fx)
                + map.get(0, 0, y0, x1) * (1.0 - fy) * fx
                + map.get(0, 0, y1, x0) * fy * (1.0 - fx)
                + map.get(0, 0, y1, x1) * fy * fx;
            out.set(0, 0, oy, ox, v.clamp(0.0, 1.0));
        }
    }
    out
}

/// Normalize then upsample to `out_size` (default input resolution 32).
pub fn normalize_upsample(raw: &Tensor4<f32>, out_size: usize) -> Tensor4<f32> {
    bilinear_upsample(&normalize_map(raw), out_size)
}

/// Full heatmap for one image: capture, weight, normalize, upsample.
pub fn heatmap(
    model: &Model<f32>,
    image: &Tensor4<f32>,
    target_class: u8,
    layer_index: usize,
) -> Result<Heatmap, Error> {
    let fg = capture_gradients(model, image, target_class, layer_index)?;
    let raw = gradcam_map(&fg);
    let normalized = normalize_map(&raw);
    let upsampled = bilinear_upsample(&normalized, model.topology.input.1);
    Ok(Heatmap {
        raw,
        normalized,
        upsampled,
        target_class,
    })
}

/// Fixed 3-stop linear colour ramp: black(0) -> red(0.5) -> yellow(1).
pub fn colormap(t: f32) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let (r, g) = if t <= 0.5 {
        (2.0 * t, 0.0)
    } else {
        (1.0, 2.0 * (t - 0.5))
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, 0]
}

/// Blend `out = (1 - alpha) * image + alpha * colormap(heat)` per pixel.
pub fn render_overlay(
    image: &Tensor4<f32>,
    heat: &Tensor4<f32>,
    alpha: f32,
) -> Result<image::RgbImage, Error> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let (_, _, h, w) = image.shape();
    let mut out = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let hot = colormap(heat.get(0, 0, y, x));
            let mut px = [0u8; 3];
            for c in 0..3 {
                let base = image.get(0, c, y, x) * 255.0;
                let v = (1.0 - alpha) * base + alpha * hot[c] as f32;
                px[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(out)
}

/// Greyscale rendering of a heatmap.
pub fn render_heat(heat: &Tensor4<f32>) -> image::GrayImage {
    let (_, _, h, w) = heat.shape();
    let mut out = image::GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = (heat.get(0, 0, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
            out.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    out
}

fn sanitize_id(id: &str) -> String {
    let stem = Path::new(id)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| id.to_string());
    stem.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn save_atomic(img: &image::DynamicImage, path: &Path) -> Result<(), Error> {
    let tmp = path.with_extension("tmp.png");
    img.save_with_format(&tmp, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write `<id>.overlay.png` and `<id>.heat.png` for every image, using the
/// model's predicted class as the Grad-CAM target. Returns the written
/// paths. Optionally also writes an 8x nearest-neighbour enlarged overlay.
pub fn explain_batch(
    model: &Model<f32>,
    images: &[LabeledImage],
    layer_index: usize,
    out_dir: impl AsRef<Path>,
    enlarge: bool,
) -> Result<Vec<PathBuf>, Error> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();
    for img in images {
        let (probs, _) = model.forward(&img.pixels)?;
        let target = predict_label(probs[0]);
        let hm = heatmap(model, &img.pixels, target, layer_index)?;
        let overlay = render_overlay(&img.pixels, &hm.upsampled, 0.5)?;
        let heat_img = render_heat(&hm.upsampled);
        let id = sanitize_id(&img.source_id);

        let overlay_path = out_dir.join(format!("{id}.overlay.png"));
        save_atomic(&image::DynamicImage::ImageRgb8(overlay.clone()), &overlay_path)?;
        written.push(overlay_path);

        let heat_path = out_dir.join(format!("{id}.heat.png"));
        save_atomic(&image::DynamicImage::ImageLuma8(heat_img), &heat_path)?;
        written.push(heat_path);

        if enlarge {
            let big = image::imageops::resize(
                &overlay,
                overlay.width() * 8,
                overlay.height() * 8,
                image::imageops::FilterType::Nearest,
            );
            let big_path = out_dir.join(format!("{id}.overlay.x8.png"));
            save_atomic(&image::DynamicImage::ImageRgb8(big), &big_path)?;
            written.push(big_path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelTopology;
    use crate::rng::SeededRng;

    #[test]
    fn all_zero_gradients_give_zero_map() {
        let fg = FeatureMapGradients {
            activations: Tensor4::constant((1, 2, 3, 3), 1.5),
            gradients: Tensor4::zeros((1, 2, 3, 3)),
            layer_index: 0,
        };
        let map = gradcam_map(&fg);
        assert!(map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_evaluated_map() {
        // One channel, gradient all ones, A = [[1,-2],[3,0]] -> alpha=1,
        // map = relu(A) = [[1,0],[3,0]].
        let fg = FeatureMapGradients {
            activations: Tensor4::from_values((1, 1, 2, 2), vec![1.0, -2.0, 3.0, 0.0]).unwrap(),
            gradients: Tensor4::constant((1, 1, 2, 2), 1.0),
            layer_index: 0,
        };
        let map = gradcam_map(&fg);
        assert_eq!(map.data(), &[1.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn opposite_alphas_cancel() {
        // Two identical channels with alpha = (1, -1) sum to zero.
        let mut grads = Tensor4::zeros((1, 2, 2, 2));
        for i in 0..2 {
            for j in 0..2 {
                grads.set(0, 0, i, j, 1.0);
                grads.set(0, 1, i, j, -1.0);
            }
        }
        let mut acts = Tensor4::zeros((1, 2, 2, 2));
        for ch in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    acts.set(0, ch, i, j, (i * 2 + j) as f32);
                }
            }
        }
        let map = gradcam_map(&FeatureMapGradients {
            activations: acts,
            gradients: grads,
            layer_index: 0,
        });
        assert!(map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_constant_and_zero_maps() {
        let c = Tensor4::constant((1, 1, 2, 2), 3.0);
        assert!(normalize_map(&c).data().iter().all(|&v| v == 1.0));
        let z = Tensor4::zeros((1, 1, 2, 2));
        assert!(normalize_map(&z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upsample_column_ramp() {
        // [[0,1],[0,1]] -> left column 0, right column 1, linear in between.
        let m = Tensor4::from_values((1, 1, 2, 2), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = bilinear_upsample(&m, 32);
        for y in 0..32 {
            assert_eq!(up.get(0, 0, y, 0), 0.0);
            assert_eq!(up.get(0, 0, y, 31), 1.0);
            for x in 0..32 {
                let expect = x as f32 / 31.0;
                assert!((up.get(0, 0, y, x) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [0, 0, 0]);
        assert_eq!(colormap(0.5), [255, 0, 0]);
        assert_eq!(colormap(1.0), [255, 255, 0]);
    }

    #[test]
    fn overlay_alpha_zero_is_input() {
        let mut rng = SeededRng::new(2);
        let img: Tensor4<f32> = rng.sample_normal((1, 3, 4, 4), 0.5, 0.1).unwrap();
        let img = img.map_elementwise(|v| v.clamp(0.0, 1.0));
        let heat = Tensor4::constant((1, 1, 4, 4), 0.7);
        let out = render_overlay(&img, &heat, 0.0).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let px = out.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    let expect = (img.get(0, c, y, x) * 255.0).round() as u8;
                    assert_eq!(px[c], expect);
                }
            }
        }
    }

    #[test]
    fn overlay_full_alpha_hits_ramp() {
        let img = Tensor4::zeros((1, 3, 1, 2));
        let heat = Tensor4::from_values((1, 1, 1, 2), vec![1.0, 0.5]).unwrap();
        let out = render_overlay(&img, &heat, 1.0).unwrap();
        assert_eq!(out.get_pixel(0, 0).0, [255, 255, 0]);
        assert_eq!(out.get_pixel(1, 0).0, [255, 0, 0]);
    }

    #[test]
    fn fake_gradient_is_negated_real_gradient() {
        let topology = ModelTopology::new(&[4, 4], &[8]).unwrap();
        let model: Model<f32> = Model::new(topology, 1).unwrap();
        let mut rng = SeededRng::new(5);
        let img: Tensor4<f32> = rng.sample_normal((1, 3, 32, 32), 0.5, 0.2).unwrap();
        let real = capture_gradients(&model, &img, 1, 1).unwrap();
        let fake = capture_gradients(&model, &img, 0, 1).unwrap();
        assert_eq!(real.gradients.shape(), real.activations.shape());
        for (a, b) in real.gradients.data().iter().zip(fake.gradients.data()) {
            assert!((a + b).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_layer_rejected() {
        let topology = ModelTopology::new(&[4], &[]).unwrap();
        let model: Model<f32> = Model::new(topology, 1).unwrap();
        let img = Tensor4::zeros((1, 3, 32, 32));
        assert!(capture_gradients(&model, &img, 1, 1).is_err());
    }

    #[test]
    fn explain_batch_writes_two_files_per_image() {
        let topology = ModelTopology::new(&[4], &[]).unwrap();
        let model: Model<f32> = Model::new(topology, 1).unwrap();
        let mut rng = SeededRng::new(3);
        let corpus = crate::data::generate_square_corpus(2, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let files = explain_batch(&model, &corpus.images, 0, dir.path(), false).unwrap();
        assert_eq!(files.len(), 8);
        for f in &files {
            assert!(f.exists());
        }
    }

    #[test]
    fn explain_batch_empty_ok() {
        let topology = ModelTopology::new(&[4], &[]).unwrap();
        let model: Model<f32> = Model::new(topology, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = explain_batch(&model, &[], 0, dir.path(), false).unwrap();
        assert!(files.is_empty());
    }

    #[test]
    fn explain_batch_deterministic_rerun() {
        let topology = ModelTopology::new(&[4], &[]).unwrap();
        let model: Model<f32> = Model::new(topology, 1).unwrap();
        let mut rng = SeededRng::new(3);
        let corpus = crate::data::generate_square_corpus(1, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let files = explain_batch(&model, &corpus.images, 0, dir.path(), false).unwrap();
        let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
        let files2 = explain_batch(&model, &corpus.images, 0, dir.path(), false).unwrap();
        assert_eq!(files, files2);
        for (f, bytes) in files2.iter().zip(&first) {
            assert_eq!(&fs::read(f).unwrap(), bytes);
        }
    }
}
