//! Offline stand-ins for real datasets. `digits` produces 28x28 IDX files
//! with ten learnable classes so loader and training paths can be exercised
//! without downloads.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{write_idx_images, write_idx_labels, Dataset, IdxImages};
use crate::error::Result;
use crate::rng::{mix, seeded, streams};

const SIDE: usize = 28;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// One prototype per class: a few bright gaussian blobs. Prototypes depend
/// only on `seed`, so train and test splits generated with the same seed
/// share classes.
fn prototypes(seed: u64) -> Vec<[f64; SIDE * SIDE]> {
    let mut rng = seeded(seed, streams::SYNTHETIC);
    (0..10)
        .map(|_| {
            let mut img = [0.0; SIDE * SIDE];
            for _ in 0..3 {
                let cy = rng.random_range(7.0..21.0);
                let cx = rng.random_range(7.0..21.0);
                let s: f64 = rng.random_range(2.0..4.0);
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                        img[y * SIDE + x] += (-d2 / (2.0 * s * s)).exp();
                    }
                }
            }
            img
        })
        .collect()
}

/// `n` images with labels cycling through the ten classes. Each sample is its
/// class prototype shifted by up to two pixels plus pixel noise.
pub fn digits(n: usize, seed: u64, split: u64) -> (IdxImages, Vec<u8>) {
    let protos = prototypes(seed);
    let mut rng = seeded(mix(seed, split), streams::SYNTHETIC);
    let noise = Normal::new(0.0, 0.15).expect("valid std");
    let mut pixels = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 10) as u8;
        let dy = rng.random_range(-2i64..=2);
        let dx = rng.random_range(-2i64..=2);
        let proto = &protos[label as usize];
        for y in 0..SIDE as i64 {
            for x in 0..SIDE as i64 {
                let (sy, sx) = (y - dy, x - dx);
                let base = if (0..SIDE as i64).contains(&sy) && (0..SIDE as i64).contains(&sx) {
                    proto[sy as usize * SIDE + sx as usize]
                } else {
                    0.0
                };
                let v = (base + noise.sample(&mut rng)).clamp(0.0, 1.0);
                pixels.push((v * 255.0).round() as u8);
            }
        }
        labels.push(label);
    }
    (IdxImages { count: n, rows: SIDE, cols: SIDE, pixels }, labels)
}

/// Writes a train/test pair under the standard MNIST file names.
pub fn write_digits_dir(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (split, n, img_name, lbl_name) in
        [(0, n_train, TRAIN_IMAGES, TRAIN_LABELS), (1, n_test, TEST_IMAGES, TEST_LABELS)]
    {
        let (images, labels) = digits(n, seed, split);
        write_idx_images(BufWriter::new(File::create(dir.join(img_name))?), &images)?;
        write_idx_labels(BufWriter::new(File::create(dir.join(lbl_name))?), &labels)?;
    }
    Ok(())
}

/// Gaussian class clusters in `dim` dimensions with means at distance
/// `separation` along random directions.
pub fn gaussian_classes(n: usize, dim: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset> {
    let mut rng = seeded(seed, streams::SYNTHETIC + 10);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.into_iter().map(|v| v / len * separation).collect()
        })
        .collect();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        features.extend(means[c].iter().map(|m| m + normal.sample(&mut rng)));
        labels.push(c);
    }
    Dataset::new(features, vec![dim], labels, classes)
}
