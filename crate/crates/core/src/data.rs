//! Datasets: IDX and CSV loading, one-hot encoding, seeded synthetic
//! classification problems, and train/test splitting.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::sig9;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Minimum distance between synthetic class centers, in units of the
/// within-class standard deviation.
pub const SYNTHETIC_SEPARATION: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Labeled samples. Image data is stored flattened row-major as
/// `(y, x, channel)` with `image_shape` recording the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub image_shape: Option<ImageShape>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ds = Dataset {
            features,
            labels,
            num_classes,
            image_shape: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_image_shape(mut self, shape: ImageShape) -> Result<Self> {
        if shape.len() != self.num_features() {
            return Err(Error::Domain(format!(
                "image shape {shape:?} does not match {} features",
                self.num_features()
            )));
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::EmptyDataset("no samples".into()));
        }
        if self.features.nrows() != self.labels.len() {
            return Err(Error::Domain(format!(
                "{} feature rows but {} labels",
                self.features.nrows(),
                self.labels.len()
            )));
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::Label {
                label,
                classes: self.num_classes,
            });
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            image_shape: self.image_shape,
        }
    }

    /// Shuffles with `seed` and puts the first `train_fraction` of samples
    /// in the training part. Both parts are nonempty.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Domain(format!(
                "split fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        if self.len() < 2 {
            return Err(Error::EmptyDataset("need at least two samples to split".into()));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64 * train_fraction).round() as usize).clamp(1, self.len() - 1);
        Ok((self.subset(&order[..cut]), self.subset(&order[cut..])))
    }

    /// Multiplies every feature by `factor` (for example `1/16` for 4-bit
    /// pixel data).
    pub fn scaled(mut self, factor: f64) -> Dataset {
        self.features.mapv_inplace(|v| v * factor);
        self
    }

    pub fn one_hot(&self) -> Array2<f64> {
        one_hot(&self.labels, self.num_classes).expect("labels validated on construction")
    }

    /// Writes `label,feature,...` lines with 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (label, row) in self.labels.iter().zip(self.features.outer_iter()) {
            write!(out, "{label}")?;
            for v in row {
                write!(out, ",{}", sig9(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        buf.flush().map_err(|e| Error::io(path, e))
    }
}

/// `N x K` indicator matrix of `labels`.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((labels.len(), num_classes));
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::Label {
                label,
                classes: num_classes,
            });
        }
        out[[i, label]] = 1.0;
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxLength {
            path: path.to_path_buf(),
            detail: format!("header ends before byte {}", offset + 4),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize, path: &Path) -> Result<()> {
    let expected = header + payload;
    if bytes.len() != expected {
        return Err(Error::IdxLength {
            path: path.to_path_buf(),
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    Ok(())
}

/// Decodes an IDX image/label pair (the MNIST distribution format). Pixel
/// bytes are divided by 255; the class count is the largest label plus one.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_file(images)?;
    let lab = read_file(labels)?;
    decode_idx(&img, images, &lab, labels)
}

/// [`load_idx`] over in-memory bytes; the paths only label errors.
pub fn decode_idx(img: &[u8], images: &Path, lab: &[u8], labels: &Path) -> Result<Dataset> {
    check_magic(img, IDX_IMAGES_MAGIC, images)?;
    let n = be_u32(img, 4, images)? as usize;
    let rows = be_u32(img, 8, images)? as usize;
    let cols = be_u32(img, 12, images)? as usize;
    check_payload(img, 16, n * rows * cols, images)?;

    check_magic(lab, IDX_LABELS_MAGIC, labels)?;
    let n_labels = be_u32(lab, 4, labels)? as usize;
    check_payload(lab, 8, n_labels, labels)?;
    if n != n_labels {
        return Err(Error::IdxCount {
            images: n,
            labels: n_labels,
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset(format!("{} holds no images", images.display())));
    }

    let pixels: Vec<f64> = img[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    let features = Array2::from_shape_vec((n, rows * cols), pixels).expect("payload length checked");
    let labels_vec: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels_vec.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels_vec, num_classes)?.with_image_shape(ImageShape {
        height: rows,
        width: cols,
        channels: 1,
    })
}

/// Reads a headerless CSV with an integer label in the first column and
/// real features after it.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let bytes = read_file(path)?;
    parse_csv(&bytes, path)
}

/// [`load_csv`] over in-memory bytes; `path` only labels errors.
pub fn parse_csv(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let csv_err = |line: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(labels.len() + 1, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(csv_err(line, "expected a label and at least one feature".into()));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(csv_err(line, format!("expected {w} fields, found {}", record.len())));
            }
            Some(_) => {}
        }
        let label_text = record[0].trim();
        let label: usize = label_text
            .parse()
            .map_err(|_| csv_err(line, format!("label `{label_text}` is not a nonnegative integer")))?;
        labels.push(label);
        for (col, cell) in record.iter().enumerate().skip(1) {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(line, format!("field {} `{cell}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(csv_err(line, format!("field {} is not finite", col + 1)));
            }
            values.push(v);
        }
    }
    let Some(width) = width else {
        return Err(Error::EmptyDataset(format!("{} has no rows", path.display())));
    };
    let features = Array2::from_shape_vec((labels.len(), width - 1), values).expect("rectangular rows");
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, num_classes)
}

/// Gaussian class clusters with unit variance on `informative` dimensions
/// plus `noise` standard-normal dimensions that carry no class signal.
/// Labels are balanced. Class centers are drawn at random and rescaled so
/// the closest pair lies [`SYNTHETIC_SEPARATION`] apart.
pub fn synthetic_classification(
    n: usize,
    informative: usize,
    noise: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || num_classes == 0 || informative + noise == 0 {
        return Err(Error::Domain(
            "synthetic data needs samples, classes and features".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Array2::<f64>::zeros((num_classes, informative));
    centers.mapv_inplace(|_| StandardNormal.sample(&mut rng));
    let mut min_dist = f64::INFINITY;
    for i in 0..num_classes {
        for j in i + 1..num_classes {
            let d = (&centers.row(i) - &centers.row(j)).mapv(|v| v * v).sum().sqrt();
            min_dist = min_dist.min(d);
        }
    }
    if min_dist.is_finite() && min_dist > 0.0 {
        centers *= SYNTHETIC_SEPARATION / min_dist;
    }

    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    labels.shuffle(&mut rng);
    let p = informative + noise;
    let mut features = Array2::zeros((n, p));
    for (mut row, &label) in features.outer_iter_mut().zip(labels.iter()) {
        for d in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            row[d] = if d < informative { centers[[label, d]] + z } else { z };
        }
    }
    Dataset::new(features, labels, num_classes)
}
