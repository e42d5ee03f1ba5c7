//! Labeled datasets, CSV and binary matrix I/O, identity splits and
//! synthetic fixtures.
//!
//! All randomness uses `ChaCha8Rng` seeded with `seed_from_u64(seed)`.
//! Identity splits additionally select stream `trial_index` on the same seed,
//! so every trial draws from an independent, reproducible keystream.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, Matrix, DEFAULT_BASIS_TOL};

/// CSV label marking a gallery-only distractor row.
pub const DISTRACTOR_LABEL: i64 = -1;

/// Feature vectors (rows) with dense class labels `0..c`.
///
/// Optional per-sample view tags assign probe/gallery roles during
/// evaluation. Distractors are extra gallery samples that belong to no class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    views: Option<Vec<String>>,
    distractors: Option<Distractors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distractors {
    pub features: Matrix,
    pub views: Option<Vec<String>>,
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::InvalidInput(format!(
            "{what}: non-finite entry at row {r}, column {c}"
        )));
    }
    Ok(())
}

impl LabeledDataset {
    /// Builds a dataset from an `n x d` feature matrix and labels in `0..c`.
    /// Every class id below the largest label must be used.
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::InvalidInput("dataset has no samples".into()));
        }
        check_finite(&features, "features")?;
        let class_count = labels.iter().max().map_or(0, |&m| m + 1);
        let mut seen = vec![false; class_count];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("class {empty} has no samples")));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            views: None,
            distractors: None,
        })
    }

    pub fn with_views(mut self, views: Vec<String>) -> Result<Self> {
        if views.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: views.len(),
            });
        }
        self.views = Some(views);
        Ok(self)
    }

    pub fn with_distractors(mut self, distractors: Distractors) -> Result<Self> {
        if distractors.features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: distractors.features.ncols(),
            });
        }
        check_finite(&distractors.features, "distractors")?;
        if distractors.features.nrows() > 0 {
            self.distractors = Some(distractors);
        }
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn views(&self) -> Option<&[String]> {
        self.views.as_deref()
    }

    pub fn distractors(&self) -> Option<&Distractors> {
        self.distractors.as_ref()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Sample indices grouped by class, each in original order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// Samples whose class is in `classes`, relabeled `0..classes.len()` in
    /// the order given. Distractors are not carried over.
    pub fn select_classes(&self, classes: &[usize]) -> Result<LabeledDataset> {
        let mut remap = vec![None; self.class_count];
        for (new, &old) in classes.iter().enumerate() {
            if old >= self.class_count {
                return Err(Error::InvalidInput(format!("class {old} out of range")));
            }
            remap[old] = Some(new);
        }
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| remap[self.labels[i]].is_some())
            .collect();
        let features = self.features.select_rows(&rows);
        let labels = rows.iter().map(|&i| remap[self.labels[i]].unwrap()).collect();
        let mut out = LabeledDataset::new(features, labels)?;
        if let Some(v) = &self.views {
            out.views = Some(rows.iter().map(|&i| v[i].clone()).collect());
        }
        Ok(out)
    }
}

/// Options for [`load_csv_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Second column holds a view tag. When a header is present this is also
    /// switched on by a second header field named `view`.
    pub has_view: bool,
}

/// Reads `label[,view],f1,...,fd` rows. Labels are re-indexed densely in
/// order of first appearance; label `-1` marks a distractor.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<LabeledDataset> {
    load_csv_with(
        path,
        CsvOptions {
            has_header,
            has_view: false,
        },
    )
}

pub fn load_csv_with(path: impl AsRef<Path>, opts: CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut lines = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let mut has_view = opts.has_view;
    if opts.has_header {
        match lines.next() {
            Some((_, header)) => {
                if header.split(',').nth(1).map(str::trim) == Some("view") {
                    has_view = true;
                }
            }
            None => return Err(perr(1, "empty file".into())),
        }
    }
    let skip = if has_view { 2 } else { 1 };

    let mut ids: HashMap<i64, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut views = Vec::new();
    let mut values = Vec::new();
    let mut distractor_values = Vec::new();
    let mut distractor_views = Vec::new();
    let mut dim: Option<usize> = None;

    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() <= skip {
            return Err(perr(lineno, "row has no feature columns".into()));
        }
        let d = fields.len() - skip;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(perr(
                    lineno,
                    format!("ragged row: expected {expected} features, found {d}"),
                ))
            }
            _ => {}
        }
        let raw: i64 = fields[0]
            .parse()
            .map_err(|_| perr(lineno, format!("label `{}` is not an integer", fields[0])))?;
        let distractor = raw == DISTRACTOR_LABEL;
        let target = if distractor {
            &mut distractor_values
        } else {
            &mut values
        };
        for (col, f) in fields[skip..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                perr(
                    lineno,
                    format!("feature column {} value `{f}` is not numeric", col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(perr(lineno, format!("feature column {} is not finite", col + 1)));
            }
            target.push(v);
        }
        let view = has_view.then(|| fields[1].to_string());
        if distractor {
            distractor_views.extend(view);
        } else {
            if raw < 0 {
                return Err(perr(lineno, format!("negative label {raw}")));
            }
            let next = ids.len();
            labels.push(*ids.entry(raw).or_insert(next));
            views.extend(view);
        }
    }

    let Some(d) = dim else {
        return Err(perr(1, "empty file".into()));
    };
    if labels.is_empty() {
        return Err(perr(1, "no labeled rows".into()));
    }
    let features = Matrix::from_row_slice(labels.len(), d, &values);
    let mut ds = LabeledDataset::new(features, labels)?;
    if has_view {
        ds = ds.with_views(views)?;
    }
    if !distractor_values.is_empty() {
        let rows = distractor_values.len() / d;
        ds = ds.with_distractors(Distractors {
            features: Matrix::from_row_slice(rows, d, &distractor_values),
            views: has_view.then_some(distractor_views),
        })?;
    }
    Ok(ds)
}

/// Writes the dataset with a header row. Floats use the shortest decimal
/// representation that parses back to the same bits.
pub fn save_csv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let has_view = dataset.views.is_some();

    let mut header = String::from("label");
    if has_view {
        header.push_str(",view");
    }
    for j in 0..dataset.dim() {
        header.push_str(&format!(",f{j}"));
    }
    writeln!(w, "{header}").map_err(io)?;

    let mut write_row = |label: String, view: Option<&str>, row: nalgebra::DMatrixView<'_, f64>| {
        let mut line = label;
        if let Some(v) = view {
            line.push(',');
            line.push_str(v);
        }
        for x in row.iter() {
            line.push_str(&format!(",{x:?}"));
        }
        writeln!(w, "{line}")
    };
    for i in 0..dataset.len() {
        let view = dataset.views.as_ref().map(|v| v[i].as_str());
        write_row(dataset.labels[i].to_string(), view, dataset.features.rows(i, 1)).map_err(io)?;
    }
    if let Some(dis) = &dataset.distractors {
        for i in 0..dis.features.nrows() {
            let view = dis.views.as_ref().map(|v| v[i].as_str());
            write_row(DISTRACTOR_LABEL.to_string(), view, dis.features.rows(i, 1)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

const CACHE_MAGIC: &[u8; 4] = b"NKML";
const CACHE_VERSION: u8 = 1;
const CACHE_HEADER: usize = 4 + 1 + 8 + 8;

/// Binary matrix cache: `NKML`, version byte, u64 rows, u64 cols, then
/// row-major little-endian f64 entries.
pub fn encode_matrix_cache(m: &Matrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(CACHE_HEADER + 8 * m.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.push(CACHE_VERSION);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    buf
}

pub fn decode_matrix_cache(bytes: &[u8]) -> Result<Matrix> {
    let bad = |msg: &str| Error::InvalidInput(format!("matrix cache: {msg}"));
    if bytes.len() < CACHE_HEADER || &bytes[..4] != CACHE_MAGIC {
        return Err(bad("missing NKML header"));
    }
    if bytes[4] != CACHE_VERSION {
        return Err(bad(&format!("unsupported version {}", bytes[4])));
    }
    let rows = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[13..21].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .filter(|c| c.checked_mul(8).map(|b| b + CACHE_HEADER) == Some(bytes.len()))
        .ok_or_else(|| bad("payload length does not match shape"))?;
    let data: Vec<f64> = bytes[CACHE_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    debug_assert_eq!(data.len(), count);
    let m = Matrix::from_row_slice(rows, cols, &data);
    check_finite(&m, "matrix cache")?;
    Ok(m)
}

pub fn write_matrix_cache(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_matrix_cache(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_cache(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix_cache(&bytes)
}

/// Repeated random identity splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub trial_count: usize,
    /// Fraction of identities used for training.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            trial_count: 10,
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trial_count == 0 {
            return Err(Error::InvalidInput("trial count must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Identities drawn for training in one trial, in ascending id order.
pub fn train_identities(class_count: usize, spec: &SplitSpec, trial_index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial_index as u64);
    let mut ids: Vec<usize> = (0..class_count).collect();
    ids.shuffle(&mut rng);
    let take = (class_count as f64 * spec.train_fraction).floor() as usize;
    let mut train = ids[..take].to_vec();
    train.sort_unstable();
    train
}

/// Splits the identities of `dataset` into disjoint train and test sets.
/// Distractors go to the test set.
pub fn split_identities(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
    trial_index: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    if trial_index >= spec.trial_count {
        return Err(Error::InvalidInput(format!(
            "trial index {trial_index} out of range for {} trials",
            spec.trial_count
        )));
    }
    let c = dataset.class_count();
    if c < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 identities, got {c}")));
    }
    let train_ids = train_identities(c, spec, trial_index);
    if train_ids.is_empty() || train_ids.len() == c {
        return Err(Error::InvalidInput(format!(
            "train fraction {} leaves an empty side with {c} identities",
            spec.train_fraction
        )));
    }
    let mut in_train = vec![false; c];
    for &i in &train_ids {
        in_train[i] = true;
    }
    let test_ids: Vec<usize> = (0..c).filter(|&i| !in_train[i]).collect();
    let train = dataset.select_classes(&train_ids)?;
    let mut test = dataset.select_classes(&test_ids)?;
    if let Some(d) = &dataset.distractors {
        test = test.with_distractors(d.clone())?;
    }
    Ok((train, test))
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Gaussian classes for small-sample-size experiments.
///
/// Class means are `separation * g / sqrt(2d)` with `g` standard normal, so
/// the expected squared distance between two means is `separation^2`. Each
/// sample adds `spread * g / sqrt(d)`, an isotropic perturbation of expected
/// squared norm `spread^2`. Samples are ordered class by class.
pub fn synth_gaussian_classes(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    synth_impl(classes, per_class, dim, spread, separation, None, seed)
}

/// Like [`synth_gaussian_classes`] but the within-class noise is confined to
/// a random `noise_rank`-dimensional subspace shared by all classes. This
/// keeps a within-class nullspace available when `n >= d`.
pub fn synth_low_rank_noise(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    separation: f64,
    noise_rank: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if noise_rank == 0 || noise_rank > dim {
        return Err(Error::InvalidInput(format!(
            "noise rank must lie in 1..={dim}, got {noise_rank}"
        )));
    }
    synth_impl(classes, per_class, dim, spread, separation, Some(noise_rank), seed)
}

fn synth_impl(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    separation: f64,
    noise_rank: Option<usize>,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidInput(format!(
            "need classes >= 2, per_class >= 1, dim >= 1; got {classes}, {per_class}, {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_scale = separation / (2.0 * dim as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| normal_vec(&mut rng, dim).into_iter().map(|g| g * mean_scale).collect())
        .collect();

    let basis = match noise_rank {
        Some(k) => {
            let g = Matrix::from_column_slice(dim, k, &normal_vec(&mut rng, dim * k));
            Some(orthonormal_basis(&g, DEFAULT_BASIS_TOL)?)
        }
        None => None,
    };
    let noise_dim = noise_rank.unwrap_or(dim);
    let noise_scale = spread / (noise_dim as f64).sqrt();

    let n = classes * per_class;
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            let row = labels.len();
            let g = normal_vec(&mut rng, noise_dim);
            let noise: Vec<f64> = match &basis {
                Some(b) => (b * nalgebra::DVector::from_vec(g)).iter().copied().collect(),
                None => g,
            };
            for j in 0..dim {
                features[(row, j)] = mean[j] + noise_scale * noise[j];
            }
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels)
}
