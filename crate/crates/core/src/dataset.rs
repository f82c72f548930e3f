//! Feature-matrix assembly, cleaning, normalization, and stratified splits.
//!
//! Missing cells are represented as `f64::NAN` and are only legal before
//! [`drop_missing`] has run; every downstream consumer (normalization,
//! models, explanation) requires a clean matrix.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("matrix construction: {0}")]
    Construction(String),
    #[error("unknown cohort label {0:?}")]
    UnknownCohort(String),
    #[error("cleaning removed every feature (threshold {threshold}, {n_features} features examined)")]
    AllFeaturesDropped { threshold: usize, n_features: usize },
    #[error("cleaning removed every sample")]
    AllSamplesDropped,
    #[error("cohort filter produced an empty matrix")]
    EmptyFilter,
    #[error("cohort filter requires a nonempty keep set")]
    EmptyKeepSet,
    #[error("normalization params cover {params} features but matrix has {matrix}")]
    NormShapeMismatch { params: usize, matrix: usize },
    #[error("normalization params were fitted for feature {expected:?} but matrix has {found:?} at position {index}")]
    NormNameMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("matrix contains missing values; run drop_missing first")]
    MissingValues,
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("stratified split needs at least 2 samples per class, class {0} has {1}")]
    ClassTooSmall(String, usize),
    #[error("k_folds={k} exceeds the smallest class count {min_class}")]
    TooManyFolds { k: usize, min_class: usize },
    #[error("labels are not binary PD/HC (found {0:?})")]
    NotBinary(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Study cohort of a participant. Binary classification uses PD as the
/// positive class (1) and HC as the negative class (0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CohortLabel {
    Pd,
    Hc,
    Prodromal,
    Swedd,
}

impl CohortLabel {
    pub const ALL: [CohortLabel; 4] = [
        CohortLabel::Pd,
        CohortLabel::Hc,
        CohortLabel::Prodromal,
        CohortLabel::Swedd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CohortLabel::Pd => "PD",
            CohortLabel::Hc => "HC",
            CohortLabel::Prodromal => "Prodromal",
            CohortLabel::Swedd => "SWEDD",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DataError> {
        match s {
            "PD" => Ok(CohortLabel::Pd),
            "HC" => Ok(CohortLabel::Hc),
            "Prodromal" => Ok(CohortLabel::Prodromal),
            "SWEDD" => Ok(CohortLabel::Swedd),
            other => Err(DataError::UnknownCohort(other.to_string())),
        }
    }

    /// PD -> 1, HC -> 0; the other cohorts have no binary encoding.
    pub fn binary(&self) -> Option<u8> {
        match self {
            CohortLabel::Pd => Some(1),
            CohortLabel::Hc => Some(0),
            _ => None,
        }
    }
}

impl fmt::Display for CohortLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Samples x named features with cohort labels; the unit of all downstream
/// computation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<CohortLabel>,
    participant_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<CohortLabel>,
        participant_ids: Vec<String>,
    ) -> Result<Self, DataError> {
        if rows.len() != labels.len() || rows.len() != participant_ids.len() {
            return Err(DataError::Construction(format!(
                "{} rows, {} labels, {} ids",
                rows.len(),
                labels.len(),
                participant_ids.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(DataError::Construction(format!(
                "row width {} does not match {} feature names",
                bad.len(),
                feature_names.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::Construction(format!(
                    "duplicate feature name {name:?}"
                )));
            }
        }
        Ok(Self {
            feature_names,
            rows,
            labels,
            participant_ids,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[CohortLabel] {
        &self.labels
    }

    pub fn participant_ids(&self) -> &[String] {
        &self.participant_ids
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().flatten().any(|v| v.is_nan())
    }

    /// Binary targets for the PD-vs-HC task. Errors if any other cohort is
    /// still present.
    pub fn binary_labels(&self) -> Result<Vec<u8>, DataError> {
        self.labels
            .iter()
            .map(|l| {
                l.binary()
                    .ok_or_else(|| DataError::NotBinary(l.as_str().to_string()))
            })
            .collect()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            participant_ids: indices
                .iter()
                .map(|&i| self.participant_ids[i].clone())
                .collect(),
        }
    }

    fn select_columns(&self, keep: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: keep.iter().map(|&j| self.feature_names[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
            participant_ids: self.participant_ids.clone(),
        }
    }

    /// Per-class sample counts in the canonical PD, HC, Prodromal, SWEDD order.
    pub fn cohort_counts(&self) -> Vec<(CohortLabel, usize)> {
        CohortLabel::ALL
            .iter()
            .map(|&c| (c, self.labels.iter().filter(|&&l| l == c).count()))
            .filter(|&(_, n)| n > 0)
            .collect()
    }

    /// Writes the wide-format CSV: participant_id, cohort, then one column
    /// per feature. Missing cells are written empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["participant_id".to_string(), "cohort".to_string()];
        header.extend(self.feature_names.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut record = vec![
                self.participant_ids[i].clone(),
                self.labels[i].as_str().to_string(),
            ];
            for v in &self.rows[i] {
                record.push(if v.is_nan() {
                    String::new()
                } else {
                    format!("{v}")
                });
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the wide-format CSV written by [`FeatureMatrix::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<FeatureMatrix, DataError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "participant_id" || &header[1] != "cohort" {
            return Err(DataError::Construction(
                "expected participant_id,cohort,... header".to_string(),
            ));
        }
        let feature_names: Vec<String> = header.iter().skip(2).map(|s| s.to_string()).collect();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            ids.push(record[0].to_string());
            labels.push(CohortLabel::parse(&record[1])?);
            let row: Result<Vec<f64>, DataError> = record
                .iter()
                .skip(2)
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        cell.parse::<f64>().map_err(|e| {
                            DataError::Construction(format!("bad numeric cell {cell:?}: {e}"))
                        })
                    }
                })
                .collect();
            rows.push(row?);
        }
        FeatureMatrix::new(feature_names, rows, labels, ids)
    }

    pub fn read_csv_path(path: &Path) -> Result<FeatureMatrix, DataError> {
        let file = std::fs::File::open(path)?;
        FeatureMatrix::read_csv(std::io::BufReader::new(file))
    }
}

/// Two-stage missing-data removal: first drop every feature whose missing
/// count exceeds `max_feature_missing`, then drop every sample that still
/// has a missing value. The result contains no missing cells.
pub fn drop_missing(
    matrix: &FeatureMatrix,
    max_feature_missing: usize,
) -> Result<FeatureMatrix, DataError> {
    let n_features = matrix.n_features();
    let mut missing_per_feature = vec![0usize; n_features];
    for row in matrix.rows() {
        for (j, v) in row.iter().enumerate() {
            if v.is_nan() {
                missing_per_feature[j] += 1;
            }
        }
    }
    let keep_features: Vec<usize> = (0..n_features)
        .filter(|&j| missing_per_feature[j] <= max_feature_missing)
        .collect();
    if keep_features.is_empty() {
        return Err(DataError::AllFeaturesDropped {
            threshold: max_feature_missing,
            n_features,
        });
    }
    let narrowed = matrix.select_columns(&keep_features);
    let keep_rows: Vec<usize> = (0..narrowed.n_samples())
        .filter(|&i| !narrowed.row(i).iter().any(|v| v.is_nan()))
        .collect();
    if keep_rows.is_empty() {
        return Err(DataError::AllSamplesDropped);
    }
    Ok(narrowed.select_rows(&keep_rows))
}

/// Restricts rows to the kept cohorts, preserving order and the feature set.
pub fn filter_cohorts(
    matrix: &FeatureMatrix,
    keep: &BTreeSet<CohortLabel>,
) -> Result<FeatureMatrix, DataError> {
    if keep.is_empty() {
        return Err(DataError::EmptyKeepSet);
    }
    let indices: Vec<usize> = (0..matrix.n_samples())
        .filter(|&i| keep.contains(&matrix.labels()[i]))
        .collect();
    if indices.is_empty() {
        return Err(DataError::EmptyFilter);
    }
    Ok(matrix.select_rows(&indices))
}

/// Per-feature min/max fitted on training rows, reusable on any matrix with
/// the same feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub features: Vec<FeatureRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl NormalizationParams {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("normalization params serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Fits min-max parameters on the training matrix. The matrix must be clean.
pub fn fit_minmax(train: &FeatureMatrix) -> Result<NormalizationParams, DataError> {
    if train.has_missing() {
        return Err(DataError::MissingValues);
    }
    let mut features = Vec::with_capacity(train.n_features());
    for (j, name) in train.feature_names().iter().enumerate() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for row in train.rows() {
            min = min.min(row[j]);
            max = max.max(row[j]);
        }
        features.push(FeatureRange {
            name: name.clone(),
            min,
            max,
        });
    }
    Ok(NormalizationParams { features })
}

/// Rescales every feature to [0, 1] with the fitted parameters: constant
/// features map to 0 and out-of-range values are clipped.
pub fn apply_minmax(
    params: &NormalizationParams,
    matrix: &FeatureMatrix,
) -> Result<FeatureMatrix, DataError> {
    if params.features.len() != matrix.n_features() {
        return Err(DataError::NormShapeMismatch {
            params: params.features.len(),
            matrix: matrix.n_features(),
        });
    }
    for (index, (range, name)) in params
        .features
        .iter()
        .zip(matrix.feature_names())
        .enumerate()
    {
        if range.name != *name {
            return Err(DataError::NormNameMismatch {
                index,
                expected: range.name.clone(),
                found: name.clone(),
            });
        }
    }
    let rows = matrix
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&params.features)
                .map(|(&v, r)| {
                    let span = r.max - r.min;
                    if span == 0.0 {
                        0.0
                    } else {
                        ((v - r.min) / span).clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    FeatureMatrix::new(
        matrix.feature_names().to_vec(),
        rows,
        matrix.labels().to_vec(),
        matrix.participant_ids().to_vec(),
    )
}

/// Seeded plan for the 80/20 split and the k-fold partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub test_fraction: f64,
    pub k_folds: usize,
}

impl SplitPlan {
    pub fn new(seed: u64, test_fraction: f64, k_folds: usize) -> Result<Self, DataError> {
        let plan = Self {
            seed,
            test_fraction,
            k_folds,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(DataError::InvalidPlan(format!(
                "test_fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        if self.k_folds < 2 {
            return Err(DataError::InvalidPlan(format!(
                "k_folds {} must be at least 2",
                self.k_folds
            )));
        }
        Ok(())
    }
}

/// Indices grouped by label in canonical cohort order, each group shuffled by
/// its own seeded stream so results do not depend on thread count or on how
/// many other classes exist.
fn shuffled_class_indices(matrix: &FeatureMatrix, seed: u64) -> Vec<(CohortLabel, Vec<usize>)> {
    CohortLabel::ALL
        .iter()
        .enumerate()
        .filter_map(|(class_idx, &class)| {
            let mut indices: Vec<usize> = (0..matrix.n_samples())
                .filter(|&i| matrix.labels()[i] == class)
                .collect();
            if indices.is_empty() {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class_idx as u64));
            indices.shuffle(&mut rng);
            Some((class, indices))
        })
        .collect()
}

/// Stratified train/test split: per-class test counts are the rounded
/// proportional share, so each class is within one sample of exact
/// proportionality. Deterministic for a given seed.
pub fn stratified_split(
    matrix: &FeatureMatrix,
    plan: &SplitPlan,
) -> Result<(FeatureMatrix, FeatureMatrix), DataError> {
    plan.validate()?;
    let groups = shuffled_class_indices(matrix, plan.seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, indices) in groups {
        let n = indices.len();
        if n < 2 {
            return Err(DataError::ClassTooSmall(class.as_str().to_string(), n));
        }
        let raw = (plan.test_fraction * n as f64).round() as usize;
        let take = raw.clamp(1, n - 1);
        test_idx.extend_from_slice(&indices[..take]);
        train_idx.extend_from_slice(&indices[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((matrix.select_rows(&train_idx), matrix.select_rows(&test_idx)))
}

/// One cross-validation fold: (train_indices, valid_indices).
pub type FoldIndices = (Vec<usize>, Vec<usize>);

/// Stratified k-fold partition. Valid sets partition all row indices;
/// per-class fold counts differ by at most one, so every fold's class ratio
/// is within one sample of the global ratio. Deterministic for a given
/// seed.
pub fn stratified_kfold(
    matrix: &FeatureMatrix,
    plan: &SplitPlan,
) -> Result<Vec<FoldIndices>, DataError> {
    plan.validate()?;
    let k = plan.k_folds;
    let groups = shuffled_class_indices(matrix, plan.seed);
    if let Some((class, indices)) = groups.iter().find(|(_, idx)| idx.len() < k) {
        let _ = class;
        return Err(DataError::TooManyFolds {
            k,
            min_class: indices.len(),
        });
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    // Rotate the dealing start between classes so remainder samples do not
    // pile onto the first folds.
    let mut offset = 0usize;
    for (_, indices) in &groups {
        for (pos, &idx) in indices.iter().enumerate() {
            folds[(pos + offset) % k].push(idx);
        }
        offset = (offset + indices.len()) % k;
    }
    let result = folds
        .into_iter()
        .map(|mut valid| {
            valid.sort_unstable();
            let members: BTreeSet<usize> = valid.iter().copied().collect();
            let train: Vec<usize> = (0..matrix.n_samples())
                .filter(|i| !members.contains(i))
                .collect();
            (train, valid)
        })
        .collect();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_matrix(labels: &[CohortLabel], values: Vec<Vec<f64>>) -> FeatureMatrix {
        let n_features = values[0].len();
        let names = (0..n_features).map(|j| format!("f{j}")).collect();
        let ids = (0..labels.len()).map(|i| format!("P{i:03}")).collect();
        FeatureMatrix::new(names, values, labels.to_vec(), ids).unwrap()
    }

    fn labelled(n_pd: usize, n_hc: usize) -> FeatureMatrix {
        let labels: Vec<CohortLabel> = std::iter::repeat_n(CohortLabel::Pd, n_pd)
            .chain(std::iter::repeat_n(CohortLabel::Hc, n_hc))
            .collect();
        let values = (0..labels.len()).map(|i| vec![i as f64]).collect();
        toy_matrix(&labels, values)
    }

    #[test]
    fn drop_missing_removes_heavy_features_then_rows() {
        // 5x3: column 1 missing in 3 rows (threshold 2 -> dropped), row 4
        // missing elsewhere -> removed. Expected 4x2.
        let m = toy_matrix(
            &[CohortLabel::Pd; 5],
            vec![
                vec![1.0, f64::NAN, 1.0],
                vec![2.0, f64::NAN, 2.0],
                vec![3.0, f64::NAN, 3.0],
                vec![4.0, 4.0, 4.0],
                vec![f64::NAN, 5.0, 5.0],
            ],
        );
        let cleaned = drop_missing(&m, 2).unwrap();
        assert_eq!(cleaned.n_samples(), 4);
        assert_eq!(cleaned.n_features(), 2);
        assert_eq!(cleaned.feature_names(), &["f0".to_string(), "f2".to_string()]);
        assert!(!cleaned.has_missing());
    }

    #[test]
    fn drop_missing_reproduces_msf_feature_removal() {
        // Two features missing in 422 of 1862 samples are dropped wholesale.
        let n = 1862;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let missing = i < 422;
            rows.push(vec![
                1.0,
                if missing { f64::NAN } else { 2.0 },
                if missing { f64::NAN } else { 3.0 },
            ]);
        }
        let m = toy_matrix(&vec![CohortLabel::Pd; n], rows);
        let threshold = n / 10;
        let cleaned = drop_missing(&m, threshold).unwrap();
        assert_eq!(cleaned.n_features(), 1);
        assert_eq!(cleaned.n_samples(), n);
    }

    #[test]
    fn drop_missing_is_identity_on_clean_matrix() {
        let m = toy_matrix(&[CohortLabel::Pd, CohortLabel::Hc], vec![vec![1.0], vec![2.0]]);
        let cleaned = drop_missing(&m, 0).unwrap();
        assert_eq!(cleaned, m);
        // idempotent
        assert_eq!(drop_missing(&cleaned, 0).unwrap(), cleaned);
    }

    #[test]
    fn drop_missing_errors_when_everything_goes() {
        let m = toy_matrix(&[CohortLabel::Pd; 2], vec![vec![f64::NAN], vec![f64::NAN]]);
        assert!(matches!(
            drop_missing(&m, 0),
            Err(DataError::AllFeaturesDropped { .. })
        ));
    }

    #[test]
    fn filter_cohorts_keeps_pd_hc_counts() {
        let mut labels = vec![CohortLabel::Pd; 1050];
        labels.extend(vec![CohortLabel::Prodromal; 736]);
        labels.extend(vec![CohortLabel::Hc; 253]);
        labels.extend(vec![CohortLabel::Swedd; 65]);
        let values = (0..labels.len()).map(|i| vec![i as f64]).collect();
        let m = toy_matrix(&labels, values);
        let keep: BTreeSet<_> = [CohortLabel::Pd, CohortLabel::Hc].into_iter().collect();
        let filtered = filter_cohorts(&m, &keep).unwrap();
        assert_eq!(filtered.n_samples(), 1303);
    }

    #[test]
    fn filter_cohorts_identity_and_order() {
        let labels = [
            CohortLabel::Hc,
            CohortLabel::Pd,
            CohortLabel::Hc,
            CohortLabel::Pd,
        ];
        let m = toy_matrix(&labels, vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let all: BTreeSet<_> = CohortLabel::ALL.into_iter().collect();
        assert_eq!(filter_cohorts(&m, &all).unwrap(), m);

        let hc_only: BTreeSet<_> = [CohortLabel::Hc].into_iter().collect();
        let hc = filter_cohorts(&m, &hc_only).unwrap();
        assert_eq!(hc.participant_ids(), &["P000".to_string(), "P002".to_string()]);

        let empty: BTreeSet<CohortLabel> = BTreeSet::new();
        assert!(matches!(
            filter_cohorts(&m, &empty),
            Err(DataError::EmptyKeepSet)
        ));
        let swedd: BTreeSet<_> = [CohortLabel::Swedd].into_iter().collect();
        assert!(matches!(
            filter_cohorts(&m, &swedd),
            Err(DataError::EmptyFilter)
        ));
    }

    #[test]
    fn minmax_maps_endpoints_and_guards_constants() {
        let train = toy_matrix(
            &[CohortLabel::Pd; 3],
            vec![vec![0.0, 3.0], vec![2.0, 3.0], vec![4.0, 3.0]],
        );
        let params = fit_minmax(&train).unwrap();
        let scaled = apply_minmax(&params, &train).unwrap();
        assert_eq!(scaled.row(0), &[0.0, 0.0]);
        assert_eq!(scaled.row(1), &[0.5, 0.0]);
        assert_eq!(scaled.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn minmax_clips_out_of_range_test_values() {
        let train = toy_matrix(&[CohortLabel::Pd; 2], vec![vec![0.0], vec![4.0]]);
        let params = fit_minmax(&train).unwrap();
        let test = toy_matrix(&[CohortLabel::Hc; 2], vec![vec![5.0], vec![-1.0]]);
        let scaled = apply_minmax(&params, &test).unwrap();
        assert_eq!(scaled.row(0), &[1.0]);
        assert_eq!(scaled.row(1), &[0.0]);
    }

    #[test]
    fn minmax_rejects_mismatched_features() {
        let train = toy_matrix(&[CohortLabel::Pd; 2], vec![vec![0.0], vec![4.0]]);
        let params = fit_minmax(&train).unwrap();
        let other = FeatureMatrix::new(
            vec!["other".to_string()],
            vec![vec![1.0]],
            vec![CohortLabel::Pd],
            vec!["P0".to_string()],
        )
        .unwrap();
        assert!(matches!(
            apply_minmax(&params, &other),
            Err(DataError::NormNameMismatch { .. })
        ));
    }

    #[test]
    fn split_gives_exact_proportional_counts() {
        let m = labelled(80, 20);
        let plan = SplitPlan::new(7, 0.2, 5).unwrap();
        let (train, test) = stratified_split(&m, &plan).unwrap();
        let count = |m: &FeatureMatrix, c| m.labels().iter().filter(|&&l| l == c).count();
        assert_eq!(count(&test, CohortLabel::Pd), 16);
        assert_eq!(count(&test, CohortLabel::Hc), 4);
        assert_eq!(count(&train, CohortLabel::Pd), 64);
        assert_eq!(count(&train, CohortLabel::Hc), 16);
    }

    #[test]
    fn split_balanced_small() {
        let m = labelled(10, 10);
        let plan = SplitPlan::new(1, 0.2, 5).unwrap();
        let (_, test) = stratified_split(&m, &plan).unwrap();
        let count = |c| test.labels().iter().filter(|&&l| l == c).count();
        assert_eq!(count(CohortLabel::Pd), 2);
        assert_eq!(count(CohortLabel::Hc), 2);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let m = labelled(30, 10);
        let plan = SplitPlan::new(99, 0.25, 5).unwrap();
        let (tr1, te1) = stratified_split(&m, &plan).unwrap();
        let (tr2, te2) = stratified_split(&m, &plan).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let other = SplitPlan::new(100, 0.25, 5).unwrap();
        let (_, te3) = stratified_split(&m, &other).unwrap();
        assert_ne!(te1.participant_ids(), te3.participant_ids());
    }

    #[test]
    fn split_rejects_tiny_class() {
        let m = labelled(5, 1);
        let plan = SplitPlan::new(1, 0.2, 2).unwrap();
        assert!(matches!(
            stratified_split(&m, &plan),
            Err(DataError::ClassTooSmall(_, 1))
        ));
    }

    #[test]
    fn kfold_counts_per_fold() {
        let m = labelled(10, 5);
        let plan = SplitPlan::new(3, 0.2, 5).unwrap();
        let folds = stratified_kfold(&m, &plan).unwrap();
        assert_eq!(folds.len(), 5);
        for (_, valid) in &folds {
            let pd = valid.iter().filter(|&&i| m.labels()[i] == CohortLabel::Pd).count();
            let hc = valid.iter().filter(|&&i| m.labels()[i] == CohortLabel::Hc).count();
            assert_eq!(pd, 2);
            assert_eq!(hc, 1);
        }
    }

    #[test]
    fn kfold_valid_sets_partition_indices() {
        let m = labelled(13, 7);
        let plan = SplitPlan::new(11, 0.2, 4).unwrap();
        let folds = stratified_kfold(&m, &plan).unwrap();
        let mut seen = vec![0usize; m.n_samples()];
        for (train, valid) in &folds {
            for &i in valid {
                seen[i] += 1;
            }
            assert_eq!(train.len() + valid.len(), m.n_samples());
            for &i in train {
                assert!(!valid.contains(&i));
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn kfold_even_split() {
        let m = labelled(4, 4);
        let plan = SplitPlan::new(5, 0.2, 2).unwrap();
        let folds = stratified_kfold(&m, &plan).unwrap();
        for (_, valid) in &folds {
            assert_eq!(valid.len(), 4);
            let pd = valid.iter().filter(|&&i| m.labels()[i] == CohortLabel::Pd).count();
            assert_eq!(pd, 2);
        }
    }

    #[test]
    fn kfold_rejects_k_above_minority() {
        let m = labelled(10, 3);
        let plan = SplitPlan::new(5, 0.2, 4).unwrap();
        assert!(matches!(
            stratified_kfold(&m, &plan),
            Err(DataError::TooManyFolds { k: 4, min_class: 3 })
        ));
    }

    #[test]
    fn csv_round_trip_preserves_missing() {
        let m = toy_matrix(
            &[CohortLabel::Pd, CohortLabel::Hc],
            vec![vec![1.5, f64::NAN], vec![0.25, 3.0]],
        );
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back.feature_names(), m.feature_names());
        assert!(back.row(0)[1].is_nan());
        assert_eq!(back.row(1), m.row(1));
    }

    proptest! {
        #[test]
        fn normalized_train_values_live_in_unit_interval(
            values in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 3),
                2..40,
            )
        ) {
            let labels = vec![CohortLabel::Pd; values.len()];
            let m = toy_matrix(&labels, values);
            let params = fit_minmax(&m).unwrap();
            let scaled = apply_minmax(&params, &m).unwrap();
            for j in 0..scaled.n_features() {
                let col: Vec<f64> = scaled.rows().iter().map(|r| r[j]).collect();
                prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
                let constant = params.features[j].max == params.features[j].min;
                if !constant {
                    prop_assert!(col.contains(&0.0));
                    prop_assert!(col.contains(&1.0));
                } else {
                    prop_assert!(col.iter().all(|&v| v == 0.0));
                }
            }
        }

        #[test]
        fn fold_ratios_stay_within_one_sample(
            n_pd in 5usize..60,
            n_hc in 5usize..60,
            k in 2usize..5,
            seed in 0u64..1000,
        ) {
            let m = labelled(n_pd, n_hc);
            let plan = SplitPlan { seed, test_fraction: 0.2, k_folds: k };
            prop_assume!(k <= n_pd.min(n_hc));
            let folds = stratified_kfold(&m, &plan).unwrap();
            let global = n_pd as f64 / (n_pd + n_hc) as f64;
            for (_, valid) in folds {
                let pd = valid.iter().filter(|&&i| m.labels()[i] == CohortLabel::Pd).count();
                let expected = valid.len() as f64 * global;
                prop_assert!((pd as f64 - expected).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
