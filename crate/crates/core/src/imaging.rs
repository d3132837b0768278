//! Pixel-color adaptation: load 8-bit RGB images, train a monotone map that
//! carries source pixel colors onto a Gaussian fitted to a target image,
//! and apply it to new images.

use std::fs;
use std::io::{self, Cursor};
use std::path::Path;

use image::codecs::png::PngDecoder;
use image::{ColorType, ImageDecoder, ImageError, RgbImage};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::mgn::MgnModel;
use crate::rng::substream;
use crate::training::{evaluate, train_with, Batch, GaussianTargetNll, InMemory, TrainConfig, TrainFailure, TrainReport};
use crate::transport::{fit_gaussian_rows, kl_divergence, GaussianModel};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Normalized RGB pixels in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDataset {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl PixelDataset {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, found: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.pixels.iter().flatten().copied().collect()
    }

    pub fn vectors(&self) -> Vec<DenseVector> {
        self.pixels.iter().map(|p| DenseVector::from_vec(p.to_vec())).collect()
    }

    pub fn fit_gaussian(&self) -> Result<GaussianModel> {
        fit_gaussian_rows(3, &self.flat())
    }
}

fn decode_error(path: &Path, e: ImageError) -> Error {
    match e {
        ImageError::IoError(io) => Error::Io(io),
        ImageError::Unsupported(u) => Error::UnsupportedFormat(format!("{}: {u}", path.display())),
        other => Error::Io(io::Error::new(io::ErrorKind::InvalidData, format!("{}: {other}", path.display()))),
    }
}

/// Reads an 8-bit RGB or RGBA PNG; alpha is dropped.
pub fn load_image(path: &Path) -> Result<PixelDataset> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(PNG_SIGNATURE) {
        return Err(Error::UnsupportedFormat(format!("{} is not a PNG file", path.display())));
    }
    let decoder = PngDecoder::new(Cursor::new(&bytes)).map_err(|e| decode_error(path, e))?;
    let color = decoder.color_type();
    let channels = match color {
        ColorType::Rgb8 => 3,
        ColorType::Rgba8 => 4,
        other => {
            return Err(Error::UnsupportedFormat(format!("{}: {other:?} pixels, expected 8-bit RGB", path.display())))
        }
    };
    let (w, h) = decoder.dimensions();
    let mut buf = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut buf).map_err(|e| decode_error(path, e))?;
    let pixels = buf
        .chunks_exact(channels)
        .map(|c| [f64::from(c[0]) / 255.0, f64::from(c[1]) / 255.0, f64::from(c[2]) / 255.0])
        .collect();
    PixelDataset::new(w as usize, h as usize, pixels)
}

/// Channel value to byte: clamp to `[0, 1]`, then `⌊255·v + ½⌋`.
pub fn to_byte(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8
}

/// Writes an 8-bit RGB PNG.
pub fn save_image(pixels: &PixelDataset, path: &Path) -> Result<()> {
    let raw: Vec<u8> = pixels.pixels.iter().flat_map(|p| p.map(to_byte)).collect();
    let img = RgbImage::from_raw(pixels.width as u32, pixels.height as u32, raw)
        .ok_or(Error::DimensionMismatch { expected: pixels.width * pixels.height, found: pixels.len() })?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        ImageError::IoError(io) => Error::Io(io),
        other => Error::Format(other.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Source pixels used for training, drawn without replacement.
    pub max_pixels: usize,
    /// Seed for the pixel subsample.
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self { max_pixels: 100_000, seed: 42, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSummary {
    pub train_nll: f64,
    /// `KL(fitted mapped pixels ‖ target)` after training.
    pub kl: f64,
    /// The same divergence after every epoch.
    pub kl_per_epoch: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_covariance: Vec<f64>,
    pub train_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct AdaptationResult {
    pub model: MgnModel,
    pub target: GaussianModel,
    pub summary: AdaptationSummary,
    pub train: TrainReport,
}

#[derive(Debug, thiserror::Error)]
pub enum AdaptError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error(transparent)]
    Training(#[from] Box<TrainFailure>),
}

/// KL from the Gaussian fitted to `model`'s images of `rows` to `target`.
/// Mapped values are not clamped to the color gamut.
pub fn mapped_kl(model: &MgnModel, target: &GaussianModel, rows: &[f64]) -> Result<f64> {
    let g = model.prepare();
    let mapped: Vec<f64> = rows.chunks_exact(3).flat_map(|x| g.forward(x)).collect();
    kl_divergence(&fit_gaussian_rows(3, &mapped)?, target)
}

fn subsample(source: &PixelDataset, cfg: &AdaptConfig) -> Vec<f64> {
    if source.len() <= cfg.max_pixels {
        return source.flat();
    }
    let mut rng = substream(cfg.seed, "data");
    let mut picks = index::sample(&mut rng, source.len(), cfg.max_pixels).into_vec();
    picks.sort_unstable();
    picks.iter().flat_map(|&i| source.pixels[i]).collect()
}

/// Fits a Gaussian to `target` and trains `model` to carry `source` pixel
/// colors onto it.
pub fn adapt_train(
    source: &PixelDataset,
    target: &PixelDataset,
    model: &MgnModel,
    cfg: &AdaptConfig,
) -> std::result::Result<AdaptationResult, AdaptError> {
    if model.n() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: model.n() }.into());
    }
    if model.gamma() <= 0.0 {
        return Err(Error::InvalidModel("pixel maps need gamma > 0".into()).into());
    }
    let target_gaussian = target.fit_gaussian().map_err(|e| match e {
        Error::DegenerateData(m) => Error::DegenerateData(format!("target image: {m}")),
        other => other,
    })?;
    let rows = subsample(source, cfg);
    let objective = GaussianTargetNll::new(target_gaussian.mean().clone(), target_gaussian.chol().clone());
    let data = InMemory::unlabeled(3, rows.clone());
    let mut kl_per_epoch = Vec::with_capacity(cfg.train.epochs);
    let mut kl_error = None;
    let (trained, mut report) = train_with(model, &data, &objective, &cfg.train, |_, _, m| {
        match mapped_kl(m, &target_gaussian, &rows) {
            Ok(kl) => kl_per_epoch.push(kl),
            Err(e) => {
                kl_error.get_or_insert(e);
            }
        }
    })
    .map_err(Box::new)?;
    if let Some(e) = kl_error {
        return Err(e.into());
    }
    let kl = mapped_kl(&trained, &target_gaussian, &rows)?;
    let train_nll = evaluate(&trained, &objective, &Batch::unlabeled(3, rows.clone()))?;
    report.metrics.insert("kl".into(), kl);
    report.metrics.insert("train_nll".into(), train_nll);
    let summary = AdaptationSummary {
        train_nll,
        kl,
        kl_per_epoch,
        target_mean: target_gaussian.mean().as_slice().to_vec(),
        target_covariance: target_gaussian.covariance().as_slice().to_vec(),
        train_pixels: rows.len() / 3,
    };
    Ok(AdaptationResult { model: trained, target: target_gaussian, summary, train: report })
}

/// Maps every pixel of `image` through `model`, clamping to `[0, 1]`.
pub fn adapt_apply(model: &MgnModel, image: &PixelDataset) -> Result<PixelDataset> {
    if model.n() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: model.n() });
    }
    let g = model.prepare();
    let pixels = image
        .pixels
        .iter()
        .map(|p| {
            let y = g.forward(p);
            [y[0].clamp(0.0, 1.0), y[1].clamp(0.0, 1.0), y[2].clamp(0.0, 1.0)]
        })
        .collect();
    PixelDataset::new(image.width, image.height, pixels)
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::activations::Activation;
    use crate::linalg::DenseMatrix;
    use crate::mgn::{MmgnModel, MmgnModule};
    use crate::training::{FlowNll, Objective};

    fn identity3(gamma: f64) -> MgnModel {
        MgnModel::Mmgn(
            MmgnModel::new(
                DenseVector::zeros(3),
                DenseMatrix::identity(3).map(|v: f64| v * (1.0 - gamma).sqrt()),
                vec![MmgnModule::new(DenseMatrix::zeros(2, 3), DenseVector::zeros(2), Activation::LogcoshTanh).unwrap()],
                gamma,
            )
            .unwrap(),
        )
    }

    fn noisy(width: usize, height: usize, mean: [f64; 3], sd: f64, seed: u64) -> PixelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..width * height)
            .map(|_| {
                let mut p = [0.0; 3];
                for c in 0..3 {
                    let z: f64 = rng.sample(StandardNormal);
                    p[c] = (mean[c] + sd * z).clamp(0.0, 1.0);
                }
                p
            })
            .collect();
        PixelDataset::new(width, height, pixels).unwrap()
    }

    fn write_png(path: &Path, w: u32, h: u32, color: image::ExtendedColorType, data: &[u8]) {
        image::save_buffer(path, data, w, h, color).unwrap();
    }

    #[test]
    fn load_examples() {
        let dir = tempfile::tempdir().unwrap();
        let red = dir.path().join("red.png");
        write_png(&red, 1, 1, image::ExtendedColorType::Rgb8, &[255, 0, 0]);
        let img = load_image(&red).unwrap();
        assert_eq!((img.width, img.height), (1, 1));
        assert_eq!(img.pixels, vec![[1.0, 0.0, 0.0]]);

        let black = dir.path().join("black.png");
        write_png(&black, 2, 2, image::ExtendedColorType::Rgba8, &[0, 0, 0, 7].repeat(4));
        assert_eq!(load_image(&black).unwrap().pixels, vec![[0.0; 3]; 4]);

        let bytes = fs::read(&black).unwrap();
        let cut = dir.path().join("cut.png");
        fs::write(&cut, &bytes[..bytes.len() - 20]).unwrap();
        assert!(matches!(load_image(&cut), Err(Error::Io(_))));

        let gray = dir.path().join("gray.png");
        write_png(&gray, 2, 1, image::ExtendedColorType::L8, &[3, 200]);
        assert!(matches!(load_image(&gray), Err(Error::UnsupportedFormat(_))));

        let deep = dir.path().join("deep.png");
        write_png(&deep, 1, 1, image::ExtendedColorType::Rgb16, &[0, 1, 0, 2, 0, 3]);
        assert!(matches!(load_image(&deep), Err(Error::UnsupportedFormat(_))));

        let text = dir.path().join("notes.png");
        fs::write(&text, "hello").unwrap();
        assert!(matches!(load_image(&text), Err(Error::UnsupportedFormat(_))));

        assert!(matches!(load_image(&dir.path().join("missing.png")), Err(Error::Io(_))));
    }

    #[test]
    fn save_examples() {
        assert_eq!(to_byte(0.5), 128);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.0), 0);
        assert_eq!(to_byte(1.7), 255);
        assert_eq!(to_byte(-0.2), 0);
        for b in 0..=255u8 {
            assert_eq!(to_byte(f64::from(b) / 255.0), b);
        }

        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.png");
        let raw: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as u8).collect();
        write_png(&src, 4, 3, image::ExtendedColorType::Rgb8, &raw);
        let img = load_image(&src).unwrap();
        let out = dir.path().join("out.png");
        save_image(&img, &out).unwrap();
        let back = image::open(&out).unwrap().to_rgb8().into_raw();
        assert_eq!(back, raw);
    }

    #[test]
    fn apply_examples() {
        let img = noisy(5, 4, [0.3, 0.5, 0.7], 0.1, 1);
        let same = adapt_apply(&identity3(0.0), &img).unwrap();
        assert_eq!(same, img);

        let gray = MgnModel::Mmgn(
            MmgnModel::new(DenseVector::from_vec(vec![0.5; 3]), DenseMatrix::zeros(3, 3), vec![], 0.0).unwrap(),
        );
        let black = PixelDataset::new(3, 2, vec![[0.0; 3]; 6]).unwrap();
        let out = adapt_apply(&gray, &black).unwrap();
        assert!(out.pixels.iter().all(|p| *p == [0.5; 3]));
        assert_eq!((out.width, out.height), (3, 2));

        let two_d = crate::mgn::init_params(&crate::ModelSpec::reference_cmgn(), 0).unwrap();
        assert!(matches!(adapt_apply(&two_d, &img), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn apply_is_order_independent() {
        let img = noisy(8, 8, [0.4, 0.4, 0.6], 0.2, 2);
        let model = {
            let m = identity3(0.2);
            let flat: Vec<f64> = m.flatten().flat.iter().enumerate().map(|(i, v)| v + 0.1 * ((i as f64).sin())).collect();
            m.unflatten(&flat).unwrap()
        };
        let direct = adapt_apply(&model, &img).unwrap();
        let mut order: Vec<usize> = (0..img.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let shuffled = PixelDataset::new(8, 8, order.iter().map(|&i| img.pixels[i]).collect()).unwrap();
        let mapped = adapt_apply(&model, &shuffled).unwrap();
        let mut restored = vec![[0.0; 3]; img.len()];
        for (k, &i) in order.iter().enumerate() {
            restored[i] = mapped.pixels[k];
        }
        assert_eq!(restored, direct.pixels);
    }

    #[test]
    fn standard_target_reduces_to_flow_nll() {
        let img = noisy(10, 10, [0.5; 3], 0.2, 4);
        let std = GaussianModel::standard(3);
        let target = GaussianTargetNll::new(std.mean().clone(), std.chol().clone());
        let m = identity3(0.3);
        let batch = Batch::unlabeled(3, img.flat());
        let a = evaluate(&m, &target, &batch).unwrap();
        let b = evaluate(&m, &FlowNll, &batch).unwrap();
        assert!((a - b).abs() < 1e-14);
        let _ = FlowNll.needs_targets();
    }

    #[test]
    fn matched_source_needs_no_training() {
        let target = noisy(120, 100, [0.6, 0.3, 0.2], 0.08, 5);
        let source = noisy(120, 100, [0.6, 0.3, 0.2], 0.08, 6);
        let cfg = AdaptConfig { train: TrainConfig { epochs: 0, ..TrainConfig::default() }, ..AdaptConfig::default() };
        let result = adapt_train(&source, &target, &identity3(0.01), &cfg).unwrap();
        assert!(result.summary.kl < 0.01, "{}", result.summary.kl);
        assert!(result.summary.kl >= 0.0);
    }

    #[test]
    fn training_shifts_colors_toward_the_target() {
        let source = noisy(60, 50, [0.3, 0.5, 0.8], 0.1, 7);
        let target = noisy(60, 50, [0.8, 0.4, 0.2], 0.07, 8);
        let cfg = AdaptConfig {
            max_pixels: 2000,
            train: TrainConfig { epochs: 8, batch_size: 100, learning_rate: 2e-2, ..TrainConfig::default() },
            ..AdaptConfig::default()
        };
        let result = adapt_train(&source, &target, &identity3(0.05), &cfg).unwrap();
        let kls = &result.summary.kl_per_epoch;
        assert_eq!(kls.len(), 8);
        assert_eq!(result.summary.train_pixels, 2000);
        assert!(kls.last().unwrap() < &(kls[0] * 0.5), "{kls:?}");
        let before = mapped_kl(&identity3(0.05), &result.target, &source.flat()).unwrap();
        assert!(result.summary.kl < before);
    }

    #[test]
    fn adapt_rejects_bad_inputs() {
        let mono = PixelDataset::new(4, 4, vec![[0.2, 0.2, 0.2]; 16]).unwrap();
        let src = noisy(4, 4, [0.5; 3], 0.1, 9);
        let cfg = AdaptConfig::default();
        assert!(matches!(adapt_train(&src, &mono, &identity3(0.1), &cfg), Err(AdaptError::Setup(Error::DegenerateData(_)))));
        assert!(matches!(adapt_train(&src, &src, &identity3(0.0), &cfg), Err(AdaptError::Setup(Error::InvalidModel(_)))));
    }
}
