//! LIBSVM datasets: parsing, label normalization, seeded splitting and
//! densification.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

/// Generator behind [`split`], recorded in run metadata.
pub const SHUFFLE_ALGORITHM: &str = "ChaCha8Rng::seed_from_u64 + Fisher-Yates shuffle";

/// One labelled example; feature indices are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseExample {
    pub label: f64,
    pub features: BTreeMap<usize, f64>,
}

impl SparseExample {
    /// Builds an example from `(index, value)` pairs in strictly increasing
    /// index order.
    pub fn new(label: f64, features: &[(usize, f64)]) -> Result<Self> {
        if !label.is_finite() {
            return Err(Error::NonFinite { index: 0, value: label });
        }
        let mut map = BTreeMap::new();
        let mut last = 0;
        for &(index, value) in features {
            if index < 1 || index <= last {
                return Err(Error::Domain(format!("feature indices must be >= 1 and strictly increasing, got {index} after {last}")));
            }
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
            map.insert(index, value);
            last = index;
        }
        Ok(SparseExample { label, features: map })
    }

    pub fn max_index(&self) -> usize {
        self.features.keys().next_back().copied().unwrap_or(0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.features.values().map(|v| v * v).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Vec<SparseExample>,
    d: usize,
}

impl Dataset {
    /// Dimension taken as the largest index present.
    pub fn from_examples(examples: Vec<SparseExample>) -> Self {
        let d = examples.iter().map(SparseExample::max_index).max().unwrap_or(0);
        Dataset { examples, d }
    }

    pub fn new(examples: Vec<SparseExample>, d: usize) -> Result<Self> {
        Dataset::from_examples(examples).with_dim(d)
    }

    /// Overrides the dimension; it may not drop any present index.
    pub fn with_dim(mut self, d: usize) -> Result<Self> {
        if d < self.d {
            return Err(Error::Domain(format!("dimension {d} is below the largest feature index {}", self.d)));
        }
        self.d = d;
        Ok(self)
    }

    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<SparseExample> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Dense `n × d` design matrix and the label vector.
    pub fn to_dense(&self) -> (DenseMatrix, Vec<f64>) {
        let mut data = vec![0.0; self.len() * self.d];
        for (row, ex) in data.chunks_exact_mut(self.d.max(1)).zip(&self.examples) {
            for (&i, &v) in &ex.features {
                row[i - 1] = v;
            }
        }
        let x = DenseMatrix::from_row_slice(self.len(), self.d, &data[..self.len() * self.d])
            .expect("finite by construction");
        (x, self.labels())
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_line(line_no: usize, text: &str) -> Result<Option<SparseExample>> {
    let content = text.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(None);
    }
    let mut tokens = content.split_whitespace();
    let label_tok = tokens.next().expect("non-empty line has a token");
    let label: f64 = label_tok
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| parse_error(line_no, format!("invalid label {label_tok:?}")))?;
    let mut features = BTreeMap::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_error(line_no, format!("expected index:value, got {tok:?}")))?;
        let index: usize = idx
            .parse()
            .map_err(|_| parse_error(line_no, format!("invalid feature index {idx:?}")))?;
        if index < 1 {
            return Err(parse_error(line_no, "feature index must be >= 1"));
        }
        if index <= last {
            return Err(parse_error(line_no, format!("feature index {index} does not increase (after {last})")));
        }
        let value: f64 = val
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_error(line_no, format!("invalid value {val:?} for index {index}")))?;
        features.insert(index, value);
        last = index;
    }
    Ok(Some(SparseExample { label, features }))
}

/// Parses LIBSVM text: `label idx:val …` per line, `#` comments, blank lines
/// skipped. Errors carry the 1-based line number.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => parse_error(i + 1, "line is not valid UTF-8"),
            _ => Error::Io(e),
        })?;
        if let Some(ex) = parse_line(i + 1, &line)? {
            examples.push(ex);
        }
    }
    Ok(Dataset::from_examples(examples))
}

pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    parse_libsvm(text.as_bytes())
}

/// Reads a LIBSVM file, decompressing it when the name ends in `.gz`.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(reader))
}

/// Writes the dataset back in LIBSVM form, one example per line.
pub fn to_libsvm_string(ds: &Dataset) -> String {
    let mut out = String::new();
    for ex in ds.examples() {
        write!(out, "{}", ex.label).unwrap();
        for (i, v) in &ex.features {
            write!(out, " {i}:{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Maps two label values to `{−1, +1}` (smaller to −1).
pub fn normalize_labels(ds: Dataset) -> Result<Dataset> {
    let mut distinct: Vec<f64> = Vec::new();
    for ex in ds.examples() {
        if !distinct.contains(&ex.label) {
            distinct.push(ex.label);
            if distinct.len() > 2 {
                return Err(Error::Domain(format!("more than two distinct labels: {distinct:?}")));
            }
        }
    }
    distinct.sort_by(f64::total_cmp);
    let map = |l: f64| match distinct.as_slice() {
        [only] => if *only < 0.0 { -1.0 } else { 1.0 },
        [low, _] => if l == *low { -1.0 } else { 1.0 },
        _ => l,
    };
    let d = ds.d;
    let examples = ds
        .into_examples()
        .into_iter()
        .map(|mut ex| {
            ex.label = map(ex.label);
            ex
        })
        .collect();
    Ok(Dataset { examples, d })
}

/// Seeded shuffle, then the first `⌊fraction·n⌋` examples go to train.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::Domain("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * ds.len() as f64).floor() as usize;
    let pick = |idx: &[usize]| Dataset {
        examples: idx.iter().map(|&i| ds.examples[i].clone()).collect(),
        d: ds.d,
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Length-`d` dense copy of a sparse example.
pub fn densify(ex: &SparseExample, d: usize) -> Result<DenseVector> {
    if ex.max_index() > d {
        return Err(Error::Domain(format!("feature index {} exceeds dimension {d}", ex.max_index())));
    }
    let mut v = vec![0.0; d];
    for (&i, &x) in &ex.features {
        v[i - 1] = x;
    }
    DenseVector::from_vec(v)
}
