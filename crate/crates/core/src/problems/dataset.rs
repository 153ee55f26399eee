use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DinoError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Class { values: Vec<usize>, classes: usize },
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class { values, .. } => values.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: usize,
    x: Vec<f64>,
    labels: Labels,
    normalized: bool,
}

impl Dataset {
    pub fn new(features: usize, x: Vec<f64>, labels: Labels) -> Result<Self> {
        if features == 0 {
            return Err(DinoError::Config(
                "dataset needs at least one feature".into(),
            ));
        }
        let n = labels.len();
        if n == 0 {
            return Err(DinoError::Config("dataset is empty".into()));
        }
        if x.len() != n * features {
            return Err(DinoError::DimensionMismatch {
                expected: n * features,
                got: x.len(),
            });
        }
        if !crate::vector::all_finite(&x) {
            return Err(DinoError::non_finite("dataset features"));
        }
        match &labels {
            Labels::Class { values, classes } => {
                if *classes < 2 {
                    return Err(DinoError::Config("need at least two classes".into()));
                }
                if let Some(bad) = values.iter().find(|&&c| c >= *classes) {
                    return Err(DinoError::Config(format!(
                        "label {bad} out of range for {classes} classes"
                    )));
                }
            }
            Labels::Real(v) => {
                if !crate::vector::all_finite(v) {
                    return Err(DinoError::non_finite("dataset labels"));
                }
            }
        }
        Ok(Dataset {
            features,
            x,
            labels,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.features..(j + 1) * self.features]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn class_count(&self) -> Option<usize> {
        match self.labels {
            Labels::Class { classes, .. } => Some(classes),
            Labels::Real(_) => None,
        }
    }

    pub fn class_label(&self, j: usize) -> usize {
        match &self.labels {
            Labels::Class { values, .. } => values[j],
            Labels::Real(_) => panic!("class label requested from a regression dataset"),
        }
    }

    pub fn real_label(&self, j: usize) -> f64 {
        match &self.labels {
            Labels::Real(v) => v[j],
            Labels::Class { values, .. } => values[j] as f64,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Reinterpret class indices as real-valued regression targets.
    pub fn with_real_labels(mut self) -> Self {
        if let Labels::Class { values, .. } = &self.labels {
            self.labels = Labels::Real(values.iter().map(|&c| c as f64).collect());
        }
        self
    }

    /// Min-max scale each feature column to `[0, 1]`; constant columns map to 0.
    pub fn normalize(&mut self) {
        let d = self.features;
        for k in 0..d {
            let (lo, hi) = self
                .x
                .iter()
                .skip(k)
                .step_by(d)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            let span = hi - lo;
            for v in self.x.iter_mut().skip(k).step_by(d) {
                *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
            }
        }
        self.normalized = true;
    }

    /// Feed the rows selected by `indices` (and their labels) into a hasher.
    pub(crate) fn hash_rows(&self, indices: &[usize], hasher: &mut impl sha2::Digest) {
        for &j in indices {
            hasher.update((j as u64).to_le_bytes());
            for v in self.row(j) {
                hasher.update(v.to_le_bytes());
            }
            hasher.update(self.real_label(j).to_le_bytes());
        }
    }
}

/// Seeded Gaussian-mixture classification data: `classes` cluster centres
/// drawn with standard deviation `separation`, unit-variance noise around
/// them, labels assigned round-robin.
pub fn generate_classification(
    n: usize,
    features: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || features == 0 || classes < 2 {
        return Err(DinoError::Config(format!(
            "invalid generator shape n={n} features={features} classes={classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre =
        Normal::new(0.0, separation).map_err(|e| DinoError::Config(format!("separation: {e}")))?;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let means: Vec<f64> = (0..classes * features)
        .map(|_| centre.sample(&mut rng))
        .collect();
    let mut x = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let c = j % classes;
        labels.push(c);
        for k in 0..features {
            x.push(means[c * features + k] + noise.sample(&mut rng));
        }
    }
    Dataset::new(
        features,
        x,
        Labels::Class {
            values: labels,
            classes,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelKind {
    Class { classes: usize },
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvSchema {
    pub labels: LabelKind,
    pub normalize: bool,
}

/// Read a dataset from CSV: a header row, the label in the first column and
/// one feature per remaining column.
pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, 1))?;
    let header_len = reader.headers().map_err(|e| csv_error(e, 1))?.len();
    if header_len == 0 {
        return Err(DinoError::Parse {
            line: 1,
            message: format!("{} has no header row", path.display()),
        });
    }
    if header_len < 2 {
        return Err(DinoError::Parse {
            line: 1,
            message: "expected a label column and at least one feature column".into(),
        });
    }
    let features = header_len - 1;
    let mut x = Vec::new();
    let mut class_labels = Vec::new();
    let mut real_labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_error(e, line)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header_len {
            return Err(DinoError::Parse {
                line,
                message: format!("expected {header_len} fields, found {}", record.len()),
            });
        }
        let label = &record[0];
        match schema.labels {
            LabelKind::Class { classes } => {
                let c: usize = label.parse().map_err(|_| DinoError::Parse {
                    line,
                    message: format!("invalid class label {label:?}"),
                })?;
                if c >= classes {
                    return Err(DinoError::Parse {
                        line,
                        message: format!("class label {c} out of range for {classes} classes"),
                    });
                }
                class_labels.push(c);
            }
            LabelKind::Real => real_labels.push(parse_real(label, line)?),
        }
        for field in record.iter().skip(1) {
            x.push(parse_real(field, line)?);
        }
    }
    let labels = match schema.labels {
        LabelKind::Class { classes } => Labels::Class {
            values: class_labels,
            classes,
        },
        LabelKind::Real => Labels::Real(real_labels),
    };
    if labels.is_empty() {
        return Err(DinoError::Parse {
            line: 2,
            message: format!("{} contains no data rows", path.display()),
        });
    }
    let mut data = Dataset::new(features, x, labels)?;
    if schema.normalize {
        data.normalize();
    }
    Ok(data)
}

fn parse_real(field: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DinoError::Parse {
            line,
            message: format!("invalid number {field:?}"),
        }),
    }
}

fn csv_error(e: csv::Error, line: usize) -> DinoError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DinoError::Io(io),
        other => DinoError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Write a dataset in the format [`load_csv`] reads.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(e, 0))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..data.features()).map(|k| format!("x{k}")));
    writer.write_record(&header).map_err(|e| csv_error(e, 1))?;
    for j in 0..data.len() {
        let mut row = Vec::with_capacity(data.features() + 1);
        row.push(match data.labels() {
            Labels::Class { values, .. } => values[j].to_string(),
            Labels::Real(v) => v[j].to_string(),
        });
        row.extend(data.row(j).iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(|e| csv_error(e, j + 2))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};
    use std::io::Write;

    fn class_schema(classes: usize) -> CsvSchema {
        CsvSchema {
            labels: LabelKind::Class { classes },
            normalize: false,
        }
    }

    #[test]
    fn hand_written_file_parses_exactly() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "label,a,b").unwrap();
        writeln!(f, "0,1.5,-2").unwrap();
        writeln!(f, "2,0.25,3e2").unwrap();
        writeln!(f, "1,0,0").unwrap();
        let data = load_csv(f.path(), class_schema(3)).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.features(), 2);
        assert_eq!(data.row(0), &[1.5, -2.0]);
        assert_eq!(data.row(1), &[0.25, 300.0]);
        assert_eq!(data.class_label(1), 2);
        assert!(!data.is_normalized());
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(
            load_csv(f.path(), class_schema(2)),
            Err(DinoError::Parse { .. })
        ));
    }

    #[test]
    fn header_only_file_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "label,a").unwrap();
        assert!(matches!(
            load_csv(f.path(), class_schema(2)),
            Err(DinoError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "label,a,b").unwrap();
        writeln!(f, "0,1,2").unwrap();
        writeln!(f, "1,x,2").unwrap();
        match load_csv(f.path(), class_schema(2)) {
            Err(DinoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "label,a").unwrap();
        writeln!(f, "5,1").unwrap();
        assert!(matches!(
            load_csv(f.path(), class_schema(3)),
            Err(DinoError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn normalization_maps_columns_to_unit_interval() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "y,a,b").unwrap();
        writeln!(f, "0.5,1,7").unwrap();
        writeln!(f, "1.5,3,7").unwrap();
        let schema = CsvSchema {
            labels: LabelKind::Real,
            normalize: true,
        };
        let data = load_csv(f.path(), schema).unwrap();
        assert!(data.is_normalized());
        assert_eq!(data.row(0), &[0.0, 0.0]);
        assert_eq!(data.row(1), &[1.0, 0.0]);
        assert_eq!(data.real_label(1), 1.5);
    }

    #[test]
    fn generated_file_round_trips_with_stable_checksum() {
        let data = generate_classification(1000, 8, 10, 1.0, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.csv");
        write_csv(&data, &path).unwrap();
        let back = load_csv(&path, class_schema(10)).unwrap();
        assert_eq!(back, data);

        let digest = |d: &Dataset| {
            let mut h = Sha256::new();
            d.hash_rows(&(0..d.len()).collect::<Vec<_>>(), &mut h);
            h.finalize().to_vec()
        };
        assert_eq!(digest(&back), digest(&data));
        let bytes = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("gen2.csv");
        write_csv(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), bytes);
    }

    #[test]
    fn generator_is_seeded() {
        let a = generate_classification(50, 3, 4, 2.0, 9).unwrap();
        let b = generate_classification(50, 3, 4, 2.0, 9).unwrap();
        let c = generate_classification(50, 3, 4, 2.0, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
