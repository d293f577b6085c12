//! Dataset plumbing: IDX image/label files (big-endian, the published
//! layout), a seeded Gaussian-blob generator for synthetic classification
//! data, and the subset/batching helpers the federation engine builds on.
//!
//! Pixels live on disk as bytes and in memory as `f64` features normalized
//! into `[0,1]` (value / 255).

use std::io::{Read, Write};

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Batch;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed IDX data: {0}")]
    MalformedIdx(&'static str),
    #[error("image/label counts disagree: {images} images vs {labels} labels")]
    InconsistentCounts { images: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: u32 },
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labeled feature vectors, row-major, features already in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<u32>,
    input_dim: usize,
    num_classes: u32,
}

impl Dataset {
    pub fn from_parts(
        inputs: Vec<f64>,
        labels: Vec<u32>,
        input_dim: usize,
        num_classes: u32,
    ) -> Result<Self, DataError> {
        if input_dim == 0 || labels.is_empty() {
            return Err(DataError::Empty);
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(DataError::InconsistentCounts {
                images: inputs.len() / input_dim,
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::LabelOutOfRange { label: bad, classes: num_classes });
        }
        Ok(Dataset { inputs, labels, input_dim, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sample(&self, index: usize) -> (&[f64], u32) {
        let row = &self.inputs[index * self.input_dim..(index + 1) * self.input_dim];
        (row, self.labels[index])
    }

    /// New dataset holding the given rows (duplicates allowed, order kept).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let (row, label) = self.sample(i);
            inputs.extend_from_slice(row);
            labels.push(label);
        }
        Dataset { inputs, labels, input_dim: self.input_dim, num_classes: self.num_classes }
    }

    /// Indices of every sample carrying one of the given labels.
    pub fn indices_with_labels(&self, wanted: &[u32]) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| wanted.contains(l))
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-class sample counts, length `num_classes`.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes as usize];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Assemble a training batch for the given task head.
    pub fn batch(&self, indices: &[usize], task: usize) -> Batch {
        let sub = self.subset(indices);
        Batch { inputs: sub.inputs, labels: sub.labels, task }
    }
}

/// Seeded shuffled index batches covering `0..len` once (last batch may be
/// short). One call per epoch.
pub fn shuffled_batches(len: usize, batch_size: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

// ---------------------------------------------------------------------------
// IDX format
// ---------------------------------------------------------------------------

/// Raw decoded IDX image file: `count` images of `rows × cols` bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub rows: u32,
    pub cols: u32,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        let per = (self.rows * self.cols) as usize;
        if per == 0 {
            0
        } else {
            self.pixels.len() / per
        }
    }
}

pub fn read_idx_images<R: Read>(mut input: R) -> Result<IdxImages, DataError> {
    let magic = input
        .read_u32::<BigEndian>()
        .map_err(|_| DataError::MalformedIdx("truncated image header"))?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(DataError::MalformedIdx("bad image magic"));
    }
    let count = input
        .read_u32::<BigEndian>()
        .map_err(|_| DataError::MalformedIdx("truncated image header"))?;
    let rows = input
        .read_u32::<BigEndian>()
        .map_err(|_| DataError::MalformedIdx("truncated image header"))?;
    let cols = input
        .read_u32::<BigEndian>()
        .map_err(|_| DataError::MalformedIdx("truncated image header"))?;
    let total = (count as usize)
        .checked_mul(rows as usize)
        .and_then(|v| v.checked_mul(cols as usize))
        .ok_or(DataError::MalformedIdx("image dimensions overflow"))?;
    let mut pixels = vec![0u8; total];
    input
        .read_exact(&mut pixels)
        .map_err(|_| DataError::MalformedIdx("truncated image payload"))?;
    let mut trailer = [0u8; 1];
    if input.read(&mut trailer)? != 0 {
        return Err(DataError::MalformedIdx("trailing bytes after image payload"));
    }
    Ok(IdxImages { rows, cols, pixels })
}

pub fn read_idx_labels<R: Read>(mut input: R) -> Result<Vec<u8>, DataError> {
    let magic = input
        .read_u32::<BigEndian>()
        .map_err(|_| DataError::MalformedIdx("truncated label header"))?;
    if magic != IDX_LABEL_MAGIC {
        return Err(DataError::MalformedIdx("bad label magic"));
    }
    let count = input
        .read_u32::<BigEndian>()
        .map_err(|_| DataError::MalformedIdx("truncated label header"))?;
    let mut labels = vec![0u8; count as usize];
    input
        .read_exact(&mut labels)
        .map_err(|_| DataError::MalformedIdx("truncated label payload"))?;
    let mut trailer = [0u8; 1];
    if input.read(&mut trailer)? != 0 {
        return Err(DataError::MalformedIdx("trailing bytes after label payload"));
    }
    Ok(labels)
}

pub fn write_idx_images<W: Write>(images: &IdxImages, mut out: W) -> Result<(), DataError> {
    out.write_u32::<BigEndian>(IDX_IMAGE_MAGIC)?;
    out.write_u32::<BigEndian>(images.count() as u32)?;
    out.write_u32::<BigEndian>(images.rows)?;
    out.write_u32::<BigEndian>(images.cols)?;
    out.write_all(&images.pixels)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(labels: &[u8], mut out: W) -> Result<(), DataError> {
    out.write_u32::<BigEndian>(IDX_LABEL_MAGIC)?;
    out.write_u32::<BigEndian>(labels.len() as u32)?;
    out.write_all(labels)?;
    Ok(())
}

/// Pair decoded IDX images and labels into a normalized dataset.
pub fn dataset_from_idx(images: &IdxImages, labels: &[u8]) -> Result<Dataset, DataError> {
    if images.count() != labels.len() {
        return Err(DataError::InconsistentCounts {
            images: images.count(),
            labels: labels.len(),
        });
    }
    let inputs: Vec<f64> = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<u32> = labels.iter().map(|&l| l as u32).collect();
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    Dataset::from_parts(inputs, labels, (images.rows * images.cols) as usize, num_classes)
}

// ---------------------------------------------------------------------------
// Synthetic blobs
// ---------------------------------------------------------------------------

/// Knobs for the Gaussian-blob generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: u32,
    pub samples_per_class: usize,
    pub rows: u32,
    pub cols: u32,
    /// Pixel-space noise standard deviation (features are `[0,1]`).
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec { classes: 4, samples_per_class: 1500, rows: 28, cols: 28, noise: 0.15, seed: 0 }
    }
}

/// Generate balanced Gaussian-blob classification data as raw IDX pixel
/// bytes (one random class center per class, per-pixel noise, clipped to
/// bytes). Deterministic given the spec.
pub fn generate_blobs(spec: &BlobSpec) -> (IdxImages, Vec<u8>) {
    let dim = (spec.rows * spec.cols) as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..dim).map(|_| rng.random_range(0.15..0.85)).collect())
        .collect();
    let noise = Normal::new(0.0, spec.noise).expect("finite noise stddev");

    let total = spec.classes as usize * spec.samples_per_class;
    let mut order: Vec<u8> = (0..total as u32).map(|i| (i % spec.classes) as u8).collect();
    order.shuffle(&mut rng);

    let mut pixels = Vec::with_capacity(total * dim);
    for &class in &order {
        for &c in &centers[class as usize] {
            let v = (c + noise.sample(&mut rng)).clamp(0.0, 1.0);
            pixels.push((v * 255.0).round() as u8);
        }
    }
    (IdxImages { rows: spec.rows, cols: spec.cols, pixels }, order)
}

/// Deterministically split off a held-out test set (`test_fraction` of the
/// samples, at least one per split when possible).
pub fn split_train_test(data: &Dataset, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut test_len = ((data.len() as f64) * test_fraction).round() as usize;
    test_len = test_len.clamp(usize::from(data.len() > 1), data.len().saturating_sub(1));
    let (test_idx, train_idx) = order.split_at(test_len);
    (data.subset(train_idx), data.subset(test_idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn tiny_images() -> IdxImages {
        IdxImages { rows: 2, cols: 3, pixels: (0..=251).step_by(2).map(|v| v as u8).collect() }
    }

    #[test]
    fn idx_round_trip_is_bit_exact() {
        let images = tiny_images();
        let labels: Vec<u8> = (0..images.count() as u8).collect();
        let mut img_bytes = Vec::new();
        write_idx_images(&images, &mut img_bytes).unwrap();
        let mut lbl_bytes = Vec::new();
        write_idx_labels(&labels, &mut lbl_bytes).unwrap();

        assert_eq!(&img_bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(&lbl_bytes[..4], &[0, 0, 8, 1]);
        assert_eq!(read_idx_images(Cursor::new(&img_bytes)).unwrap(), images);
        assert_eq!(read_idx_labels(Cursor::new(&lbl_bytes)).unwrap(), labels);

        let mut again = Vec::new();
        write_idx_images(&read_idx_images(Cursor::new(&img_bytes)).unwrap(), &mut again).unwrap();
        assert_eq!(again, img_bytes);
    }

    #[test]
    fn idx_images_expose_flat_vectors() {
        let spec = BlobSpec {
            classes: 2,
            samples_per_class: 50,
            rows: 28,
            cols: 28,
            ..BlobSpec::default()
        };
        let (images, labels) = generate_blobs(&spec);
        assert_eq!(images.count(), 100);
        let data = dataset_from_idx(&images, &labels).unwrap();
        assert_eq!(data.len(), 100);
        assert_eq!(data.input_dim(), 784);
        assert_eq!(data.sample(7).0.len(), 784);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = Vec::new();
        write_idx_images(&tiny_images(), &mut bytes).unwrap();
        bytes[3] = 0x01;
        assert!(matches!(
            read_idx_images(Cursor::new(&bytes)),
            Err(DataError::MalformedIdx("bad image magic"))
        ));
        let mut lbl = Vec::new();
        write_idx_labels(&[1, 2, 3], &mut lbl).unwrap();
        lbl[3] = 0x03;
        assert!(matches!(
            read_idx_labels(Cursor::new(&lbl)),
            Err(DataError::MalformedIdx("bad label magic"))
        ));
    }

    #[test]
    fn truncated_and_padded_files_are_rejected() {
        let mut bytes = Vec::new();
        write_idx_images(&tiny_images(), &mut bytes).unwrap();
        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(
            read_idx_images(Cursor::new(short)),
            Err(DataError::MalformedIdx("truncated image payload"))
        ));
        assert!(matches!(
            read_idx_images(Cursor::new(&bytes[..9])),
            Err(DataError::MalformedIdx("truncated image header"))
        ));
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(matches!(
            read_idx_images(Cursor::new(&padded)),
            Err(DataError::MalformedIdx("trailing bytes after image payload"))
        ));
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let images = tiny_images();
        let labels = vec![0u8; images.count() + 1];
        assert!(matches!(
            dataset_from_idx(&images, &labels),
            Err(DataError::InconsistentCounts { .. })
        ));
    }

    #[test]
    fn normalization_lands_in_unit_interval() {
        let images = IdxImages { rows: 1, cols: 2, pixels: vec![0, 255, 128, 51] };
        let data = dataset_from_idx(&images, &[0, 1]).unwrap();
        assert_eq!(data.inputs()[0], 0.0);
        assert_eq!(data.inputs()[1], 1.0);
        assert_eq!(data.inputs()[3], 0.2);
        assert!(data.inputs().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let spec = BlobSpec { classes: 4, samples_per_class: 25, seed: 9, ..BlobSpec::default() };
        let (a_img, a_lbl) = generate_blobs(&spec);
        let (b_img, b_lbl) = generate_blobs(&spec);
        assert_eq!(a_img, b_img);
        assert_eq!(a_lbl, b_lbl);
        let data = dataset_from_idx(&a_img, &a_lbl).unwrap();
        assert_eq!(data.label_histogram(), vec![25; 4]);

        let other = generate_blobs(&BlobSpec { seed: 10, ..spec }).0;
        assert_ne!(a_img, other);
    }

    #[test]
    fn blob_classes_are_linearly_separated_from_centers() {
        // Nearest-center classification should be near-perfect at this
        // noise level; guards the generator's usefulness for training.
        let spec = BlobSpec {
            classes: 3,
            samples_per_class: 40,
            rows: 4,
            cols: 4,
            noise: 0.1,
            seed: 5,
        };
        let (images, labels) = generate_blobs(&spec);
        let data = dataset_from_idx(&images, &labels).unwrap();
        let mut centers = vec![vec![0.0; 16]; 3];
        let hist = data.label_histogram();
        for i in 0..data.len() {
            let (row, label) = data.sample(i);
            for (c, v) in centers[label as usize].iter_mut().zip(row) {
                *c += v / hist[label as usize] as f64;
            }
        }
        let mut correct = 0;
        for i in 0..data.len() {
            let (row, label) = data.sample(i);
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = centers[a].iter().zip(row).map(|(c, v)| (c - v).powi(2)).sum();
                    let db: f64 = centers[b].iter().zip(row).map(|(c, v)| (c - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best as u32 == label {
                correct += 1;
            }
        }
        assert!(correct as f64 / data.len() as f64 > 0.95);
    }

    #[test]
    fn subsets_select_and_preserve_rows() {
        let images = tiny_images();
        let labels: Vec<u8> = (0..images.count() as u8).collect();
        let data = dataset_from_idx(&images, &labels).unwrap();
        let sub = data.subset(&[3, 1]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.sample(0), data.sample(3));
        assert_eq!(sub.sample(1), data.sample(1));
        assert_eq!(data.indices_with_labels(&[2, 5]), vec![2, 5]);
    }

    #[test]
    fn train_test_split_partitions_the_dataset() {
        let spec = BlobSpec { classes: 3, samples_per_class: 30, ..BlobSpec::default() };
        let (images, labels) = generate_blobs(&spec);
        let data = dataset_from_idx(&images, &labels).unwrap();
        let (train, test) = split_train_test(&data, 0.2, 3);
        assert_eq!(train.len(), 72);
        assert_eq!(test.len(), 18);
        let (train2, test2) = split_train_test(&data, 0.2, 3);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        // Re-derive membership: every original row appears exactly once.
        let mut seen = vec![0usize; data.len()];
        for part in [&train, &test] {
            for i in 0..part.len() {
                let row = part.sample(i);
                let orig = (0..data.len()).find(|&j| data.sample(j) == row).unwrap();
                seen[orig] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn shuffled_batches_cover_every_index_once() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let batches = shuffled_batches(103, 16, &mut rng);
        assert_eq!(batches.len(), 7);
        assert!(batches[..6].iter().all(|b| b.len() == 16));
        assert_eq!(batches[6].len(), 7);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_constructions_are_rejected() {
        assert!(matches!(
            Dataset::from_parts(vec![0.5; 4], vec![0, 3], 2, 2),
            Err(DataError::LabelOutOfRange { label: 3, classes: 2 })
        ));
        assert!(matches!(
            Dataset::from_parts(vec![0.5; 5], vec![0, 1], 2, 2),
            Err(DataError::InconsistentCounts { .. })
        ));
        assert!(matches!(Dataset::from_parts(vec![], vec![], 2, 2), Err(DataError::Empty)));
    }
}
