//! Dataset ingestion: the IDX container format (optionally gzipped), binary
//! class filtering, stratified validation splits, and a synthetic desk-scale
//! generator.

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::GzDecoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fs::File;
use std::io::{BufWriter, Cursor, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::Tensor;
use crate::train::{Dataset, Sample};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a whole file, transparently decompressing when the two-byte gzip
/// magic 0x1f 0x8b is present.
fn read_maybe_gzipped(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut decoded = Vec::new();
        GzDecoder::new(Cursor::new(raw))
            .read_to_end(&mut decoded)
            .map_err(|e| Error::format(format!("{}: gzip decode failed: {e}", path.display())))?;
        Ok(decoded)
    } else {
        Ok(raw)
    }
}

/// Loads IDX images (magic 0x00000803, dims count x rows x cols), scaling
/// pixel bytes to [0, 1] as value / 255.
pub fn load_idx_images(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = read_maybe_gzipped(path)?;
    let mut cursor = Cursor::new(&bytes);
    let magic = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(format!("{}: truncated magic at offset 0", path.display())))?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(format!(
            "{}: bad image magic {magic:#010x} at offset 0 (expected {IMAGES_MAGIC:#010x})",
            path.display()
        )));
    }
    let mut dims = [0usize; 3];
    for (d, dim) in dims.iter_mut().enumerate() {
        *dim = cursor.read_u32::<BigEndian>().map_err(|_| {
            Error::format(format!(
                "{}: truncated dimension {d} at offset {}",
                path.display(),
                4 + 4 * d
            ))
        })? as usize;
    }
    let [count, rows, cols] = dims;
    let expected = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::format(format!(
            "{}: payload holds {} bytes at offset 16 but dims {count}x{rows}x{cols} require {expected}",
            path.display(),
            payload.len()
        )));
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let slice = &payload[i * rows * cols..(i + 1) * rows * cols];
        let values: Vec<f64> = slice.iter().map(|&b| f64::from(b) / 255.0).collect();
        images.push(Tensor::new(vec![rows, cols], values)?);
    }
    Ok(images)
}

/// Loads IDX labels (magic 0x00000801, one dimension).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_maybe_gzipped(path)?;
    let mut cursor = Cursor::new(&bytes);
    let magic = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(format!("{}: truncated magic at offset 0", path.display())))?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(format!(
            "{}: bad label magic {magic:#010x} at offset 0 (expected {LABELS_MAGIC:#010x})",
            path.display()
        )));
    }
    let count = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(format!("{}: truncated count at offset 4", path.display())))?
        as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::format(format!(
            "{}: payload holds {} bytes at offset 8 but the header declares {count}",
            path.display(),
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

/// Writes images in IDX format. Pixel values are mapped back to bytes as
/// round(value * 255), the inverse of the loader's scaling.
pub fn write_idx_images(path: &Path, images: &[Tensor]) -> Result<()> {
    let (rows, cols) = match images.first() {
        Some(t) if t.shape().len() == 2 => (t.shape()[0], t.shape()[1]),
        Some(_) => return Err(Error::input("images must be rank-2 tensors".to_string())),
        None => (0, 0),
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u32::<BigEndian>(IMAGES_MAGIC)?;
    w.write_u32::<BigEndian>(images.len() as u32)?;
    w.write_u32::<BigEndian>(rows as u32)?;
    w.write_u32::<BigEndian>(cols as u32)?;
    for t in images {
        if t.shape() != [rows, cols] {
            return Err(Error::input("images must share one shape".to_string()));
        }
        for &v in t.values() {
            w.write_all(&[(v * 255.0).round().clamp(0.0, 255.0) as u8])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u32::<BigEndian>(LABELS_MAGIC)?;
    w.write_u32::<BigEndian>(labels.len() as u32)?;
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

/// Maps two source classes onto {+1, -1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryTask {
    pub positive_class: u8,
    pub negative_class: u8,
}

impl BinaryTask {
    pub fn new(positive_class: u8, negative_class: u8) -> Result<Self> {
        if positive_class == negative_class {
            return Err(Error::config("binary task classes must be distinct"));
        }
        Ok(BinaryTask {
            positive_class,
            negative_class,
        })
    }
}

/// Filters to the task's two classes and relabels to {+1, -1}, preserving
/// the source order. Errors if either class is absent.
pub fn make_binary(images: Vec<Tensor>, labels: &[u8], task: &BinaryTask) -> Result<Dataset> {
    if images.len() != labels.len() {
        return Err(Error::input(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let mut samples = Vec::new();
    for (image, &label) in images.into_iter().zip(labels) {
        let mapped = if label == task.positive_class {
            1
        } else if label == task.negative_class {
            -1
        } else {
            continue;
        };
        samples.push(Sample {
            input: image,
            label: mapped,
        });
    }
    let dataset = Dataset::new(samples)?;
    dataset.validate_for_training()?;
    Ok(dataset)
}

/// Splits off `per_class` samples of each label into a validation set using
/// seeded stratified sampling without replacement. Both sides keep the
/// source order.
pub fn split_validation(
    dataset: &Dataset,
    per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if per_class == 0 {
        return Ok((dataset.clone(), Dataset::new(Vec::new())?));
    }
    let positives: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.label(i) == 1).collect();
    let negatives: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.label(i) == -1).collect();
    if positives.len() < per_class || negatives.len() < per_class {
        return Err(Error::input(format!(
            "cannot split {per_class} samples per class from {} positive / {} negative",
            positives.len(),
            negatives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; dataset.len()];
    for class in [&positives, &negatives] {
        for idx in rand::seq::index::sample(&mut rng, class.len(), per_class) {
            chosen[class[idx]] = true;
        }
    }
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (i, sample) in dataset.samples().iter().enumerate() {
        if chosen[i] {
            validation.push(sample.clone());
        } else {
            train.push(sample.clone());
        }
    }
    Ok((Dataset::new(train)?, Dataset::new(validation)?))
}

/// Two interleaved noisy arcs in the plane, scaled into a box the quantum
/// feature map resolves well (roughly [0.1, 1.9] x [0.2, 1.4]). Labels
/// alternate so any prefix is nearly balanced. With zero noise the classes
/// are separated by a margin of about 0.3 in the scaled coordinates.
pub fn synthetic_two_arcs(count: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::config("two-arcs generator needs at least 2 points"));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::config("noise must be finite and nonnegative"));
    }
    let n_pos = count / 2 + count % 2;
    let n_neg = count / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let mut draw_noise = |rng: &mut ChaCha8Rng| {
        if noise > 0.0 {
            normal.sample(rng)
        } else {
            0.0
        }
    };

    let arc_point = |is_positive: bool, index: usize, total: usize| -> (f64, f64) {
        let t = if total > 1 {
            std::f64::consts::PI * index as f64 / (total - 1) as f64
        } else {
            std::f64::consts::FRAC_PI_2
        };
        if is_positive {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        }
    };

    const SCALE: f64 = 0.55;
    const SHIFT_X: f64 = 0.85;
    const SHIFT_Y: f64 = 0.85;

    let mut samples = Vec::with_capacity(count);
    let mut pos_emitted = 0;
    let mut neg_emitted = 0;
    for i in 0..count {
        let is_positive = if pos_emitted < n_pos && neg_emitted < n_neg {
            i % 2 == 0
        } else {
            pos_emitted < n_pos
        };
        let (index, total) = if is_positive {
            (pos_emitted, n_pos)
        } else {
            (neg_emitted, n_neg)
        };
        let (raw_x, raw_y) = arc_point(is_positive, index, total);
        let x = SCALE * (raw_x + draw_noise(&mut rng)) + SHIFT_X;
        let y = SCALE * (raw_y + draw_noise(&mut rng)) + SHIFT_Y;
        samples.push(Sample {
            input: Tensor::new(vec![2], vec![x, y])?,
            label: if is_positive { 1 } else { -1 },
        });
        if is_positive {
            pos_emitted += 1;
        } else {
            neg_emitted += 1;
        }
    }
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn fixture_images() -> Vec<Tensor> {
        let mut a = vec![0.0; 784];
        a[0] = 1.0;
        a[783] = 128.0 / 255.0;
        let b = vec![37.0 / 255.0; 784];
        vec![
            Tensor::new(vec![28, 28], a).unwrap(),
            Tensor::new(vec![28, 28], b).unwrap(),
        ]
    }

    #[test]
    fn idx_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let images = fixture_images();
        let labels = vec![0u8, 1u8];
        let ipath = dir.path().join("images.idx");
        let lpath = dir.path().join("labels.idx");
        write_idx_images(&ipath, &images).unwrap();
        write_idx_labels(&lpath, &labels).unwrap();

        let loaded = load_idx_images(&ipath).unwrap();
        assert_eq!(loaded.len(), 2);
        for (orig, back) in images.iter().zip(&loaded) {
            assert_eq!(orig.values(), back.values());
            assert!(back.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert_eq!(load_idx_labels(&lpath).unwrap(), labels);
    }

    #[test]
    fn every_pixel_byte_survives_the_round_trip() {
        let values: Vec<f64> = (0..=255).map(|b| f64::from(b as u8) / 255.0).collect();
        for (b, &v) in values.iter().enumerate() {
            assert_eq!((v * 255.0).round() as usize, b);
        }
        assert_eq!(values[255], 1.0);
    }

    #[test]
    fn gzipped_files_are_detected_and_decoded() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        let dir = tempdir().unwrap();
        let plain = dir.path().join("labels.idx");
        write_idx_labels(&plain, &[3, 1, 4, 1, 5]).unwrap();
        let gz_path = dir.path().join("labels.idx.gz");
        let mut enc = GzEncoder::new(File::create(&gz_path).unwrap(), Compression::default());
        enc.write_all(&std::fs::read(&plain).unwrap()).unwrap();
        enc.finish().unwrap();
        assert_eq!(load_idx_labels(&gz_path).unwrap(), vec![3, 1, 4, 1, 5]);
    }

    #[test]
    fn loader_rejects_wrong_magic_and_truncation() {
        let dir = tempdir().unwrap();
        let lpath = dir.path().join("labels.idx");
        write_idx_labels(&lpath, &[0, 1]).unwrap();
        // A label file fed to the image loader trips the magic check.
        let err = load_idx_images(&lpath).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let ipath = dir.path().join("images.idx");
        write_idx_images(&ipath, &fixture_images()).unwrap();
        let mut bytes = std::fs::read(&ipath).unwrap();
        bytes.truncate(bytes.len() - 10);
        let tpath = dir.path().join("trunc.idx");
        std::fs::write(&tpath, bytes).unwrap();
        let err = load_idx_images(&tpath).unwrap_err();
        assert!(err.to_string().contains("offset 16"), "{err}");
    }

    #[test]
    fn make_binary_filters_and_maps() {
        let images: Vec<Tensor> = (0..6)
            .map(|i| Tensor::new(vec![1], vec![i as f64 / 10.0]).unwrap())
            .collect();
        let labels = [0u8, 1, 2, 0, 1, 7];
        let task = BinaryTask::new(0, 1).unwrap();
        let data = make_binary(images.clone(), &labels, &task).unwrap();
        assert_eq!(data.len(), 4);
        assert_eq!(
            (0..4).map(|i| data.label(i)).collect::<Vec<_>>(),
            vec![1, -1, 1, -1]
        );
        // Order preserved: inputs 0.0, 0.1, 0.3, 0.4.
        assert_eq!(data.input(2), &[0.3]);

        // Swapping the classes negates every label.
        let swapped = make_binary(images.clone(), &labels, &BinaryTask::new(1, 0).unwrap()).unwrap();
        for i in 0..4 {
            assert_eq!(swapped.label(i), -data.label(i));
        }

        // A missing class is an error.
        assert!(make_binary(images, &labels, &BinaryTask::new(0, 9).unwrap()).is_err());
        assert!(BinaryTask::new(3, 3).is_err());
    }

    #[test]
    fn split_validation_is_stratified_and_exhaustive() {
        let data = synthetic_two_arcs(40, 0.1, 9).unwrap();
        let (train, val) = split_validation(&data, 5, 123).unwrap();
        assert_eq!(val.len(), 10);
        assert_eq!(train.len() + val.len(), data.len());
        assert_eq!(val.samples().iter().filter(|s| s.label == 1).count(), 5);
        assert_eq!(val.samples().iter().filter(|s| s.label == -1).count(), 5);

        // Deterministic given the seed.
        let (train2, val2) = split_validation(&data, 5, 123).unwrap();
        for (a, b) in val.samples().iter().zip(val2.samples()) {
            assert_eq!(a.input.values(), b.input.values());
        }
        for (a, b) in train.samples().iter().zip(train2.samples()) {
            assert_eq!(a.input.values(), b.input.values());
        }

        // Disjointness: multiset of inputs is preserved.
        let mut all: Vec<Vec<f64>> = data
            .samples()
            .iter()
            .map(|s| s.input.values().to_vec())
            .collect();
        let mut rebuilt: Vec<Vec<f64>> = train
            .samples()
            .iter()
            .chain(val.samples())
            .map(|s| s.input.values().to_vec())
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rebuilt.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, rebuilt);
    }

    #[test]
    fn split_validation_edge_cases() {
        let data = synthetic_two_arcs(10, 0.0, 1).unwrap();
        let (train, val) = split_validation(&data, 0, 5).unwrap();
        assert_eq!(train.len(), 10);
        assert!(val.is_empty());
        assert!(split_validation(&data, 6, 5).is_err());
    }

    #[test]
    fn two_arcs_shape_and_determinism() {
        let a = synthetic_two_arcs(21, 0.05, 77).unwrap();
        let b = synthetic_two_arcs(21, 0.05, 77).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x.input.values(), y.input.values());
            assert_eq!(x.label, y.label);
        }
        let pos = a.samples().iter().filter(|s| s.label == 1).count();
        assert_eq!(pos, 11);

        let tiny = synthetic_two_arcs(2, 0.0, 0).unwrap();
        assert_eq!(tiny.samples()[0].label, 1);
        assert_eq!(tiny.samples()[1].label, -1);
    }

    #[test]
    fn noiseless_arcs_are_separated() {
        let data = synthetic_two_arcs(200, 0.0, 3).unwrap();
        let mut min_gap = f64::INFINITY;
        for a in data.samples().iter().filter(|s| s.label == 1) {
            for b in data.samples().iter().filter(|s| s.label == -1) {
                let dx = a.input.values()[0] - b.input.values()[0];
                let dy = a.input.values()[1] - b.input.values()[1];
                min_gap = min_gap.min((dx * dx + dy * dy).sqrt());
            }
        }
        assert!(min_gap > 0.2, "classes too close: {min_gap}");
    }
}
