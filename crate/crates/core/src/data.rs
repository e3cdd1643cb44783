//! Evaluation samples: ingestion, splitting and synthetic generation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, XperError};
use crate::rng::seeded;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::BinaryClassification => "binary_classification",
        }
    }
}

impl FromStr for Task {
    type Err = XperError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "binary_classification" | "classification" => Ok(Task::BinaryClassification),
            other => Err(XperError::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
    Categorical,
}

impl FromStr for FeatureKind {
    type Err = XperError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(FeatureKind::Continuous),
            "binary" => Ok(FeatureKind::Binary),
            "categorical" => Ok(FeatureKind::Categorical),
            other => Err(XperError::Config(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// An immutable evaluation dataset: `n` rows of `q` numeric features and a target.
///
/// Features are stored row-major. Categorical columns are already encoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSample<T> {
    features: Vec<T>,
    target: Vec<T>,
    n: usize,
    q: usize,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    target_name: String,
    task: Task,
}

impl<T: Scalar> EvalSample<T> {
    /// Builds a sample from a row-major feature buffer with default metadata
    /// (`x1..xq`, all continuous, target `y`).
    pub fn new(features: Vec<T>, target: Vec<T>, task: Task) -> Result<Self> {
        let n = target.len();
        if n < 2 {
            return Err(XperError::Structure(format!(
                "a sample needs at least 2 rows, got {n}"
            )));
        }
        if features.is_empty() || features.len() % n != 0 {
            return Err(XperError::Structure(format!(
                "feature buffer of length {} does not hold {n} rows",
                features.len()
            )));
        }
        let q = features.len() / n;
        let sample = Self {
            features,
            target,
            n,
            q,
            feature_names: (1..=q).map(|j| format!("x{j}")).collect(),
            feature_kinds: vec![FeatureKind::Continuous; q],
            target_name: "y".to_string(),
            task,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn from_rows(rows: &[Vec<T>], target: Vec<T>, task: Task) -> Result<Self> {
        let q = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != q) {
            return Err(XperError::Structure("rows have unequal widths".into()));
        }
        if rows.len() != target.len() {
            return Err(XperError::Structure(format!(
                "{} feature rows but {} targets",
                rows.len(),
                target.len()
            )));
        }
        Self::new(rows.concat(), target, task)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.q {
            return Err(XperError::Structure(format!(
                "{} names for {} features",
                names.len(),
                self.q
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_feature_kinds(mut self, kinds: Vec<FeatureKind>) -> Result<Self> {
        if kinds.len() != self.q {
            return Err(XperError::Structure(format!(
                "{} kinds for {} features",
                kinds.len(),
                self.q
            )));
        }
        self.feature_kinds = kinds;
        Ok(self)
    }

    pub fn with_target_name(mut self, name: impl Into<String>) -> Self {
        self.target_name = name.into();
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(XperError::Structure(format!(
                "non-finite feature value at row {}, column {}",
                pos / self.q + 1,
                pos % self.q + 1
            )));
        }
        if let Some(pos) = self.target.iter().position(|v| !v.is_finite()) {
            return Err(XperError::Structure(format!(
                "non-finite target at row {}",
                pos + 1
            )));
        }
        if self.task == Task::BinaryClassification {
            if let Some(pos) = self
                .target
                .iter()
                .position(|&v| v != T::zero() && v != T::one())
            {
                return Err(XperError::Domain(format!(
                    "classification target must be 0 or 1; row {} has {}",
                    pos + 1,
                    self.target[pos]
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn target(&self) -> &[T] {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.q..(i + 1) * self.q]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.features.chunks_exact(self.q)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Number of rows with target 1.
    pub fn positives(&self) -> usize {
        self.target.iter().filter(|&&y| y == T::one()).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.n
    }

    /// Rows at `indices`, in the given order, with metadata preserved.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.q);
        let mut target = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n {
                return Err(XperError::Range(format!("row index {i} >= n = {}", self.n)));
            }
            features.extend_from_slice(self.row(i));
            target.push(self.target[i]);
        }
        self.with_data(features, target)
    }

    /// Same metadata, new data.
    pub fn with_data(&self, features: Vec<T>, target: Vec<T>) -> Result<Self> {
        let mut out = Self::new(features, target, self.task)?;
        if out.q != self.q {
            return Err(XperError::Structure(format!(
                "expected {} features, got {}",
                self.q, out.q
            )));
        }
        out.feature_names = self.feature_names.clone();
        out.feature_kinds = self.feature_kinds.clone();
        out.target_name = self.target_name.clone();
        Ok(out)
    }

    /// Reorders feature columns: output column `k` is input column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.q)?;
        let mut features = Vec::with_capacity(self.features.len());
        for row in self.rows() {
            features.extend(perm.iter().map(|&j| row[j]));
        }
        let mut out = Self::new(features, self.target.clone(), self.task)?;
        out.feature_names = perm.iter().map(|&j| self.feature_names[j].clone()).collect();
        out.feature_kinds = perm.iter().map(|&j| self.feature_kinds[j]).collect();
        out.target_name = self.target_name.clone();
        Ok(out)
    }

    /// Column `j` with its values reassigned as `new[i] = old[order[i]]`.
    pub fn shuffle_column(&self, j: usize, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n)?;
        let mut features = self.features.clone();
        for (i, &src) in order.iter().enumerate() {
            features[i * self.q + j] = self.features[src * self.q + j];
        }
        self.with_data(features, self.target.clone())
    }
}

fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if perm.len() != len {
        return Err(XperError::Contract(format!(
            "permutation of length {} for {len} items",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= len || std::mem::replace(&mut seen[p], true) {
            return Err(XperError::Contract("not a permutation".into()));
        }
    }
    Ok(())
}

/// Column tags and task override for [`load_csv`].
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub kinds: BTreeMap<String, FeatureKind>,
    pub task: Option<Task>,
}

/// Reads a header-first, comma-separated file.
///
/// Columns tagged categorical (or binary with non-numeric levels) are coded
/// by the sorted order of their distinct levels. Everything else must parse
/// as a number. Without an explicit task, a target holding only 0 and 1 is
/// treated as binary classification.
pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    target_column: &str,
    options: &LoadOptions,
) -> Result<EvalSample<T>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(XperError::Structure(format!(
            "{}: empty file or missing header",
            path.display()
        )));
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| XperError::MissingColumn(target_column.to_string()))?;
    for name in options.kinds.keys() {
        if !headers.contains(name) {
            return Err(XperError::MissingColumn(name.clone()));
        }
    }

    let mut cells: Vec<Vec<String>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(XperError::Structure(format!(
                "data row {} has {} fields, header has {}",
                r + 1,
                record.len(),
                headers.len()
            )));
        }
        cells.push(record.iter().map(str::to_string).collect());
    }
    if cells.is_empty() {
        return Err(XperError::Structure(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let n = cells.len();

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != target_idx).collect();
    if feature_cols.is_empty() {
        return Err(XperError::Structure("no feature columns".into()));
    }
    let mut columns: Vec<Vec<T>> = Vec::with_capacity(feature_cols.len());
    let mut kinds = Vec::with_capacity(feature_cols.len());
    for &c in &feature_cols {
        let name = &headers[c];
        let raw: Vec<&str> = cells.iter().map(|row| row[c].as_str()).collect();
        let (values, kind) = encode_column::<T>(name, &raw, options.kinds.get(name).copied())?;
        columns.push(values);
        kinds.push(kind);
    }

    let target_raw: Vec<&str> = cells.iter().map(|row| row[target_idx].as_str()).collect();
    let target = parse_numeric::<T>(target_column, &target_raw)?;
    let is_binary = target.iter().all(|&y| y == T::zero() || y == T::one());
    let task = options.task.unwrap_or(if is_binary {
        Task::BinaryClassification
    } else {
        Task::Regression
    });

    let q = columns.len();
    let mut features = Vec::with_capacity(n * q);
    for i in 0..n {
        features.extend(columns.iter().map(|col| col[i]));
    }
    EvalSample::new(features, target, task)?
        .with_feature_names(feature_cols.iter().map(|&c| headers[c].clone()).collect())?
        .with_feature_kinds(kinds)
        .map(|s| s.with_target_name(target_column))
}

fn parse_cell<T: Scalar>(column: &str, row: usize, cell: &str) -> Result<T> {
    if cell.is_empty() {
        return Err(XperError::Parse {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    let value: f64 = cell.parse().map_err(|_| XperError::Parse {
        row,
        column: column.to_string(),
        message: format!("`{cell}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(XperError::Parse {
            row,
            column: column.to_string(),
            message: format!("`{cell}` is not finite"),
        });
    }
    Ok(T::lit(value))
}

fn parse_numeric<T: Scalar>(column: &str, raw: &[&str]) -> Result<Vec<T>> {
    raw.iter()
        .enumerate()
        .map(|(r, cell)| parse_cell(column, r + 1, cell))
        .collect()
}

fn encode_column<T: Scalar>(
    name: &str,
    raw: &[&str],
    tag: Option<FeatureKind>,
) -> Result<(Vec<T>, FeatureKind)> {
    match tag {
        None | Some(FeatureKind::Continuous) => {
            let values = parse_numeric::<T>(name, raw)?;
            let kind = if tag.is_none()
                && values.iter().all(|&v| v == T::zero() || v == T::one())
            {
                FeatureKind::Binary
            } else {
                FeatureKind::Continuous
            };
            Ok((values, kind))
        }
        Some(kind @ (FeatureKind::Binary | FeatureKind::Categorical)) => {
            if let Some(r) = raw.iter().position(|c| c.is_empty()) {
                return Err(XperError::Parse {
                    row: r + 1,
                    column: name.to_string(),
                    message: "missing value".into(),
                });
            }
            if let Ok(values) = parse_numeric::<T>(name, raw) {
                if kind == FeatureKind::Binary
                    && values.iter().any(|&v| v != T::zero() && v != T::one())
                {
                    return Err(XperError::Domain(format!(
                        "binary column `{name}` holds values other than 0 and 1"
                    )));
                }
                return Ok((values, kind));
            }
            let levels: BTreeSet<&str> = raw.iter().copied().collect();
            if kind == FeatureKind::Binary && levels.len() > 2 {
                return Err(XperError::Domain(format!(
                    "binary column `{name}` has {} levels",
                    levels.len()
                )));
            }
            let codes: BTreeMap<&str, usize> =
                levels.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
            Ok((raw.iter().map(|c| T::from_count(codes[c])).collect(), kind))
        }
    }
}

/// Writes features then target, with the shortest round-trip decimal form.
pub fn write_csv<T: Scalar>(sample: &EvalSample<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = sample.feature_names().iter().map(String::as_str).collect();
    header.push(sample.target_name());
    writer.write_record(&header)?;
    for (row, &y) in sample.rows().zip(sample.target()) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{}", v.as_f64())).collect();
        record.push(format!("{}", y.as_f64()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

/// Splits into (train, test). Rows keep their original relative order.
///
/// With stratification each class contributes `round(fraction * class_size)`
/// rows to the training partition, so class rates match across partitions.
pub fn stratified_split<T: Scalar>(
    sample: &EvalSample<T>,
    spec: &SplitSpec,
) -> Result<(EvalSample<T>, EvalSample<T>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(XperError::Config(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut rng = seeded(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        if sample.task() != Task::BinaryClassification {
            return Err(XperError::Config(
                "stratified splitting requires a classification target".into(),
            ));
        }
        for class in [T::zero(), T::one()] {
            let mut members: Vec<usize> = (0..sample.n())
                .filter(|&i| sample.target()[i] == class)
                .collect();
            if members.len() < 2 {
                return Err(XperError::StratificationInfeasible(format!(
                    "class {class} has {} member(s); at least 2 are needed",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            let k = ((spec.train_fraction * members.len() as f64).round() as usize)
                .clamp(1, members.len() - 1);
            train.extend_from_slice(&members[..k]);
            test.extend_from_slice(&members[k..]);
        }
    } else {
        let mut all: Vec<usize> = (0..sample.n()).collect();
        all.shuffle(&mut rng);
        let k = (spec.train_fraction * sample.n() as f64).round() as usize;
        let k = k.clamp(1, sample.n() - 1);
        train.extend_from_slice(&all[..k]);
        test.extend_from_slice(&all[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((sample.subset(&train)?, sample.subset(&test)?))
}

/// Drops rows of the over-represented class, without replacement, until the
/// positive rate is as close as possible to `rate`.
pub fn undersample_to_rate<T: Scalar>(
    sample: &EvalSample<T>,
    rate: f64,
    seed: u64,
) -> Result<EvalSample<T>> {
    if sample.task() != Task::BinaryClassification {
        return Err(XperError::Config("undersampling needs a classification target".into()));
    }
    if !(rate > 0.0 && rate < 1.0) {
        return Err(XperError::Config(format!("target rate {rate} outside (0, 1)")));
    }
    let mut pos: Vec<usize> = (0..sample.n()).filter(|&i| sample.target()[i] == T::one()).collect();
    let mut neg: Vec<usize> = (0..sample.n()).filter(|&i| sample.target()[i] != T::one()).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(XperError::DegenerateMetric("undersampling needs both classes".into()));
    }
    let mut rng = seeded(seed);
    let current = pos.len() as f64 / sample.n() as f64;
    if current < rate {
        let keep = ((pos.len() as f64) * (1.0 - rate) / rate).round() as usize;
        neg.shuffle(&mut rng);
        neg.truncate(keep.max(1));
    } else {
        let keep = ((neg.len() as f64) * rate / (1.0 - rate)).round() as usize;
        pos.shuffle(&mut rng);
        pos.truncate(keep.max(1));
    }
    let mut keep: Vec<usize> = pos.into_iter().chain(neg).collect();
    keep.sort_unstable();
    sample.subset(&keep)
}

fn check_variances(cov_diag: &[f64]) -> Result<()> {
    if let Some(v) = cov_diag.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(XperError::Domain(format!("feature variance {v} must be positive")));
    }
    Ok(())
}

/// Latent-threshold probit design: `y = 1(b0 + x·b + e > 0)` with
/// independent `x_j ~ N(0, cov_diag[j])` and `e ~ N(0, 1)`.
///
/// `beta` holds the intercept followed by one slope per feature.
pub fn simulate_latent_probit<T: Scalar>(
    beta: &[f64],
    cov_diag: &[f64],
    n_total: usize,
    seed: u64,
) -> Result<EvalSample<T>> {
    check_variances(cov_diag)?;
    if beta.len() != cov_diag.len() + 1 {
        return Err(XperError::Domain(format!(
            "expected {} coefficients (intercept + slopes), got {}",
            cov_diag.len() + 1,
            beta.len()
        )));
    }
    let q = cov_diag.len();
    let sd: Vec<f64> = cov_diag.iter().map(|v| v.sqrt()).collect();
    let mut rng = seeded(seed);
    let mut features = Vec::with_capacity(n_total * q);
    let mut target = Vec::with_capacity(n_total);
    for _ in 0..n_total {
        let mut latent = beta[0];
        for j in 0..q {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = sd[j] * z;
            latent += beta[j + 1] * x;
            features.push(T::lit(x));
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        target.push(if latent + eps > 0.0 { T::one() } else { T::zero() });
    }
    EvalSample::new(features, target, Task::BinaryClassification)
}

/// Linear regression design: `y = intercept + x·beta + noise_sd·e`.
pub fn simulate_linear<T: Scalar>(
    intercept: f64,
    beta: &[f64],
    cov_diag: &[f64],
    noise_sd: f64,
    n: usize,
    seed: u64,
) -> Result<EvalSample<T>> {
    check_variances(cov_diag)?;
    if beta.len() != cov_diag.len() {
        return Err(XperError::Domain(format!(
            "{} slopes for {} features",
            beta.len(),
            cov_diag.len()
        )));
    }
    if !(noise_sd >= 0.0) {
        return Err(XperError::Domain(format!("noise sd {noise_sd} is negative")));
    }
    let q = cov_diag.len();
    let mut rng = seeded(seed);
    let mut features = Vec::with_capacity(n * q);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let mut y = intercept;
        for j in 0..q {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = cov_diag[j].sqrt() * z;
            y += beta[j] * x;
            features.push(T::lit(x));
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        target.push(T::lit(y + noise_sd * e));
    }
    EvalSample::new(features, target, Task::Regression)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_four_rows_two_features() {
        let f = write_file("x1,x2,y\n1,2,0\n3,4,1\n5,6,1\n7,8,0\n");
        let s: EvalSample<f64> = load_csv(f.path(), "y", &LoadOptions::default()).unwrap();
        assert_eq!((s.n(), s.q()), (4, 2));
        assert_eq!(s.task(), Task::BinaryClassification);
        assert_eq!(s.row(1), &[3.0, 4.0]);
        assert_eq!(s.feature_names(), &["x1".to_string(), "x2".to_string()]);
    }

    #[test]
    fn target_column_position_is_free() {
        let f = write_file("y,a,b\n0.5,1,2\n1.5,3,4\n");
        let s: EvalSample<f64> = load_csv(f.path(), "y", &LoadOptions::default()).unwrap();
        assert_eq!(s.task(), Task::Regression);
        assert_eq!(s.target(), &[0.5, 1.5]);
        assert_eq!(s.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn non_numeric_cell_names_its_row() {
        let f = write_file("x1,x2,y\n1,2,0\n3,4,1\nabc,6,1\n");
        let err = load_csv::<f64>(f.path(), "y", &LoadOptions::default()).unwrap_err();
        match err {
            XperError::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_target_and_empty_file_are_reported() {
        let f = write_file("x1,x2\n1,2\n3,4\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), "y", &LoadOptions::default()),
            Err(XperError::MissingColumn(c)) if c == "y"
        ));
        let f = write_file("");
        assert!(matches!(
            load_csv::<f64>(f.path(), "y", &LoadOptions::default()),
            Err(XperError::Structure(_)) | Err(XperError::MissingColumn(_))
        ));
        let f = write_file("x1,y\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), "y", &LoadOptions::default()),
            Err(XperError::Structure(_))
        ));
    }

    #[test]
    fn missing_values_are_rejected() {
        let f = write_file("x1,y\n1,0\n,1\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), "y", &LoadOptions::default()),
            Err(XperError::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn categorical_levels_are_coded_in_sorted_order() {
        let f = write_file("city,x,y\nparis,1,0\nlyon,2,1\nparis,3,1\nnice,4,0\n");
        let mut opts = LoadOptions::default();
        opts.kinds.insert("city".into(), FeatureKind::Categorical);
        let s: EvalSample<f64> = load_csv(f.path(), "y", &opts).unwrap();
        assert_eq!(s.column(0), vec![2.0, 0.0, 2.0, 1.0]);
        assert_eq!(s.feature_kinds()[0], FeatureKind::Categorical);
    }

    #[test]
    fn explicit_classification_rejects_other_labels() {
        let f = write_file("x,y\n1,0\n2,2\n");
        let opts = LoadOptions {
            task: Some(Task::BinaryClassification),
            ..Default::default()
        };
        assert!(matches!(
            load_csv::<f64>(f.path(), "y", &opts),
            Err(XperError::Domain(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s: EvalSample<f64> = simulate_linear(0.3, &[1.0, -2.0], &[1.0, 2.0], 0.5, 25, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_csv(&s, &path).unwrap();
        let back: EvalSample<f64> = load_csv(&path, "y", &LoadOptions::default()).unwrap();
        assert_eq!(back.features(), s.features());
        assert_eq!(back.target(), s.target());
    }

    fn classification(n: usize, positives: usize) -> EvalSample<f64> {
        let features: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let target = (0..n).map(|i| if i < positives { 1.0 } else { 0.0 }).collect();
        EvalSample::new(features, target, Task::BinaryClassification).unwrap()
    }

    #[test]
    fn stratified_split_preserves_class_counts() {
        let s = classification(100, 20);
        let spec = SplitSpec {
            train_fraction: 0.7,
            stratified: true,
            seed: 42,
        };
        let (train, test) = stratified_split(&s, &spec).unwrap();
        assert_eq!(train.positives(), 14);
        assert_eq!(test.positives(), 6);
        assert_eq!(train.n() + test.n(), 100);
        let (train2, test2) = stratified_split(&s, &spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let mut all: Vec<f64> = train.column(0).into_iter().chain(test.column(0)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn stratification_needs_two_members_per_class() {
        let s = classification(10, 1);
        let spec = SplitSpec {
            train_fraction: 0.7,
            stratified: true,
            seed: 1,
        };
        assert!(matches!(
            stratified_split(&s, &spec),
            Err(XperError::StratificationInfeasible(_))
        ));
    }

    #[test]
    fn simulated_probit_is_deterministic_and_validates_variances() {
        let a: EvalSample<f64> = simulate_latent_probit(&[0.05, 0.5, 0.5, 0.0], &[1.2, 1.0, 1.0], 50, 9).unwrap();
        let b: EvalSample<f64> = simulate_latent_probit(&[0.05, 0.5, 0.5, 0.0], &[1.2, 1.0, 1.0], 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            simulate_latent_probit::<f64>(&[0.0, 1.0], &[0.0], 10, 1),
            Err(XperError::Domain(_))
        ));
    }

    #[test]
    fn simulated_variances_converge() {
        let s: EvalSample<f64> = simulate_latent_probit(&[0.0, 0.1, 0.1, 0.1], &[3.0, 1.2, 1.1], 10_000, 5).unwrap();
        for (j, &v) in [3.0, 1.2, 1.1].iter().enumerate() {
            let (_, var) = crate::scalar::mean_and_variance(&s.column(j));
            assert!((var - v).abs() <= 0.1, "feature {j}: {var} vs {v}");
        }
    }

    #[test]
    fn null_coefficients_give_a_fair_coin() {
        let s: EvalSample<f64> = simulate_latent_probit(&[0.0, 0.0, 0.0], &[1.0, 1.0], 4000, 17).unwrap();
        let rate = s.positives() as f64 / s.n() as f64;
        assert!((rate - 0.5).abs() < 0.03, "{rate}");
    }

    #[test]
    fn undersampling_hits_the_requested_rate() {
        let s = classification(200, 100);
        let u = undersample_to_rate(&s, 0.2, 3).unwrap();
        assert_eq!(u.positives(), 25);
        assert_eq!(u.n(), 125);
    }
}
