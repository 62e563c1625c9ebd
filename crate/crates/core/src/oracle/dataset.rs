//! Labelled classification data: CSV and IDX ingestion plus a seeded
//! Gaussian-cluster generator.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const IDX_UNSIGNED_BYTE: u8 = 0x08;

/// Feature matrix (one row per example) with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    classes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Comma-separated values; `label_column` is zero-based.
    Csv { label_column: usize, header: bool },
    /// IDX image file plus IDX label file; the path passed to the loader is
    /// the image file.
    Idx { labels: std::path::PathBuf },
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidArgument("dataset must contain at least one example".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument("dataset must have at least one feature".into()));
        }
        if labels.len() != features.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} examples",
                labels.len(),
                features.nrows()
            )));
        }
        if classes == 0 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::InvalidLabel {
                label: l as i64,
                classes,
                location: format!("example {i}"),
            });
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature in example {}",
                pos % features.nrows()
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn example_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    fn subset(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.feature_count(), |i, j| self.features[(rows[i], j)])
    }

    /// Deterministic shuffled split into (train, test). The test part holds
    /// `round(test_fraction * n)` examples; both parts must be nonempty.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidArgument(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        let n = self.example_count();
        let n_test = (test_fraction * n as f64).round() as usize;
        if n_test == 0 || n_test >= n {
            return Err(Error::InvalidArgument(format!(
                "split of {n} examples with test fraction {test_fraction} leaves an empty part"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (test_rows, train_rows) = order.split_at(n_test);
        let pick = |rows: &[usize]| -> Result<Dataset> {
            Dataset::new(
                self.subset(rows),
                rows.iter().map(|&r| self.labels[r]).collect(),
                self.classes,
            )
        };
        Ok((pick(train_rows)?, pick(test_rows)?))
    }

    /// Writes the dataset as CSV with the label in column 0 and no header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| csv_io(path, e))?;
        for i in 0..self.example_count() {
            let mut row = Vec::with_capacity(self.feature_count() + 1);
            row.push(self.labels[i].to_string());
            row.extend(self.features.row(i).iter().map(|x| x.to_string()));
            w.write_record(&row).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Loads a dataset. `classes` fixes the label range; when `None` it is
/// inferred as `max label + 1`.
pub fn load_dataset(path: &Path, format: &DatasetFormat, classes: Option<usize>) -> Result<Dataset> {
    match format {
        DatasetFormat::Csv {
            label_column,
            header,
        } => load_csv(path, *label_column, *header, classes),
        DatasetFormat::Idx { labels } => load_idx(path, labels, classes),
    }
}

fn load_csv(path: &Path, label_column: usize, header: bool, classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<(i64, usize)> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1 + usize::from(header);
        let record = record.map_err(|e| Error::MalformedInput {
            location: format!("{} row {row_no}", path.display()),
            message: e.to_string(),
        })?;
        if record.len() <= label_column {
            return Err(Error::MalformedInput {
                location: format!("{} row {row_no}", path.display()),
                message: format!("label column {label_column} missing"),
            });
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::MalformedInput {
                location: format!("{} row {row_no}", path.display()),
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let mut feats = Vec::with_capacity(record.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            let location = || format!("{} row {row_no}, column {}", path.display(), col + 1);
            if col == label_column {
                let label: i64 = cell.parse().map_err(|_| Error::MalformedInput {
                    location: location(),
                    message: format!("label `{cell}` is not an integer"),
                })?;
                raw_labels.push((label, row_no));
            } else {
                let x: f64 = cell.parse().map_err(|_| Error::MalformedInput {
                    location: location(),
                    message: format!("`{cell}` is not a number"),
                })?;
                if !x.is_finite() {
                    return Err(Error::MalformedInput {
                        location: location(),
                        message: "non-finite feature".into(),
                    });
                }
                feats.push(x);
            }
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::MalformedInput {
            location: path.display().to_string(),
            message: "no data rows".into(),
        });
    }
    let labels = check_labels(&raw_labels, classes, |row| format!("{} row {row}", path.display()))?;
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let p = rows[0].len();
    let features = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Dataset::new(features, labels, classes)
}

fn check_labels(
    raw: &[(i64, usize)],
    classes: Option<usize>,
    location: impl Fn(usize) -> String,
) -> Result<Vec<usize>> {
    raw.iter()
        .map(|&(label, pos)| {
            let out_of_range = label < 0 || classes.is_some_and(|c| label as u64 >= c as u64);
            if out_of_range {
                Err(Error::InvalidLabel {
                    label,
                    classes: classes.unwrap_or(0),
                    location: location(pos),
                })
            } else {
                Ok(label as usize)
            }
        })
        .collect()
}

/// Parses an IDX header, returning the dimension sizes and the payload offset.
fn idx_header(bytes: &[u8], path: &Path, expected_dims: u8) -> Result<(Vec<usize>, usize)> {
    let malformed = |offset: usize, message: String| Error::MalformedInput {
        location: format!("{} byte {offset}", path.display()),
        message,
    };
    if bytes.len() < 4 {
        return Err(malformed(0, "file shorter than the IDX magic number".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(malformed(0, "IDX magic must start with two zero bytes".into()));
    }
    if bytes[2] != IDX_UNSIGNED_BYTE {
        return Err(malformed(2, format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    if bytes[3] != expected_dims {
        return Err(malformed(
            3,
            format!("expected {expected_dims} dimensions, found {}", bytes[3]),
        ));
    }
    let ndims = expected_dims as usize;
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(malformed(4, "truncated IDX dimension header".into()));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|k| {
            let o = 4 + 4 * k;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let payload: usize = dims.iter().product();
    if bytes.len() != header_len + payload {
        return Err(malformed(
            header_len,
            format!(
                "payload has {} bytes but the header declares {payload}",
                bytes.len() - header_len
            ),
        ));
    }
    Ok((dims, header_len))
}

fn load_idx(images: &Path, labels: &Path, classes: Option<usize>) -> Result<Dataset> {
    let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let (idims, ioff) = idx_header(&img, images, 3)?;
    let (ldims, loff) = idx_header(&lab, labels, 1)?;
    if idims[0] != ldims[0] {
        return Err(Error::MalformedInput {
            location: labels.display().to_string(),
            message: format!("{} labels for {} images", ldims[0], idims[0]),
        });
    }
    let n = idims[0];
    let p = idims[1] * idims[2];
    let features = DMatrix::from_fn(n, p, |i, j| f64::from(img[ioff + i * p + j]) / 255.0);
    let raw: Vec<(i64, usize)> = lab[loff..]
        .iter()
        .enumerate()
        .map(|(i, &l)| (i64::from(l), i))
        .collect();
    let labels_v = check_labels(&raw, classes, |i| format!("{} label {i}", labels.display()))?;
    let classes = classes.unwrap_or_else(|| labels_v.iter().max().map_or(1, |m| m + 1));
    Dataset::new(features, labels_v, classes)
}

/// Gaussian class clusters with identity covariance. For `classes <= d` the
/// centers sit at `separation/sqrt(2)` along distinct coordinate axes, so
/// every pair is exactly `separation` apart; otherwise centers are random
/// directions rescaled until the closest pair is `separation` apart. Labels
/// are balanced and the example order is shuffled.
pub fn synth_classification(
    d: usize,
    n: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if d == 0 || n == 0 || classes == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic dataset needs d, n, classes >= 1 (got d={d}, n={n}, classes={classes})"
        )));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "separation must be finite and nonnegative, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = if classes <= d {
        let r = separation / std::f64::consts::SQRT_2;
        (0..classes)
            .map(|c| (0..d).map(|j| if j == c { r } else { 0.0 }).collect())
            .collect()
    } else {
        let raw: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let mut min_dist = f64::INFINITY;
        for a in 0..classes {
            for b in a + 1..classes {
                let dd: f64 = raw[a].iter().zip(&raw[b]).map(|(x, y)| (x - y).powi(2)).sum();
                min_dist = min_dist.min(dd.sqrt());
            }
        }
        let scale = if min_dist > 0.0 { separation / min_dist } else { 0.0 };
        raw.into_iter()
            .map(|c| c.into_iter().map(|x| x * scale).collect())
            .collect()
    };
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut features = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[(i, j)] = centers[labels[i]][j] + z;
        }
    }
    Dataset::new(features, labels, classes)
}
