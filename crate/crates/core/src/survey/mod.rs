//! Converts raw questionnaire/assessment responses into engineered features:
//! reverse-coded item reflection, per-instrument scoring rules, and
//! severity-direction alignment.

mod battery;
pub mod io;

pub use battery::Battery;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CohortLabel, FeatureMatrix};

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("instrument {instrument}: item {item} value {value} outside [{min}, {max}]")]
    OutOfRange {
        instrument: String,
        item: String,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("instrument {instrument}: rule references unknown item {item}")]
    UnknownItem { instrument: String, item: String },
    #[error("instrument {instrument}: record contains unexpected item {item}")]
    UnexpectedItem { instrument: String, item: String },
    #[error("record for instrument {found} scored against spec {expected}")]
    InstrumentMismatch { expected: String, found: String },
    #[error("record references unknown instrument {0}")]
    UnknownInstrument(String),
    #[error("instrument {instrument}: invalid item {item}: {reason}")]
    BadItem {
        instrument: String,
        item: String,
        reason: String,
    },
    #[error("instrument {instrument}: {reason}")]
    BadInstrument { instrument: String, reason: String },
    #[error("duplicate feature name {feature} (instruments {first} and {second})")]
    DuplicateFeature {
        feature: String,
        first: String,
        second: String,
    },
    #[error("HVLT score {0} outside [0, 12]")]
    HvltOutOfRange(i64),
    #[error("participant {participant} has conflicting cohorts {first} and {second}")]
    CohortConflict {
        participant: String,
        first: CohortLabel,
        second: CohortLabel,
    },
    #[error("participant {participant} has duplicate records for instrument {instrument}")]
    DuplicateRecord {
        participant: String,
        instrument: String,
    },
    #[error("battery scoring produced no participants")]
    NoParticipants,
    #[error(transparent)]
    Data(#[from] crate::dataset::DataError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("instrument config: {0}")]
    Config(#[from] toml::de::Error),
}

/// One question of an instrument: legal response range plus whether the item
/// is reverse-keyed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub id: String,
    pub min: i64,
    pub max: i64,
    #[serde(default)]
    pub reverse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentKind {
    Subjective,
    Objective,
}

/// A named group of items summed into one feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub feature: String,
    pub items: Vec<String>,
}

/// How an instrument's item responses become named features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScoringRule {
    /// All items (after per-item reversal) summed into a single feature.
    SumAll { feature: String },
    /// Every item becomes its own feature, named by the item id.
    PassThrough,
    /// Disjoint item groups, each summed into a named feature.
    SumGroups { groups: Vec<FeatureGroup> },
    /// The four derived memory scores computed by [`hvlt_composites`].
    HvltComposites {
        trial1: String,
        trial2: String,
        trial3: String,
        delayed_recall: String,
        recognition_true_pos: String,
        recognition_false_pos: String,
    },
    /// Pass-through minus the named items.
    DropThenPassThrough { dropped: Vec<String> },
    /// A single item renamed into a feature.
    SingleScore { item: String, feature: String },
}

/// Declarative description of one survey/assessment test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    pub name: String,
    pub kind: InstrumentKind,
    pub items: Vec<ItemSpec>,
    pub rule: ScoringRule,
    #[serde(rename = "flip")]
    pub flip_for_alignment: bool,
}

/// Raw responses of one participant to one instrument. An item absent from
/// `values` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub participant_id: String,
    pub cohort: CohortLabel,
    pub instrument: String,
    pub values: BTreeMap<String, i64>,
}

impl InstrumentSpec {
    fn item(&self, id: &str) -> Option<&ItemSpec> {
        self.items.iter().find(|i| i.id == id)
    }

    fn require_item(&self, id: &str) -> Result<&ItemSpec, SurveyError> {
        self.item(id).ok_or_else(|| SurveyError::UnknownItem {
            instrument: self.name.clone(),
            item: id.to_string(),
        })
    }

    /// Checks the structural invariants: valid item ranges, unique ids, rule
    /// references that exist, disjoint groups, and no flipped subjective
    /// instruments (patient-reported scales already run higher-is-worse).
    pub fn validate(&self) -> Result<(), SurveyError> {
        if self.items.is_empty() {
            return Err(SurveyError::BadInstrument {
                instrument: self.name.clone(),
                reason: "no items".to_string(),
            });
        }
        let mut ids = BTreeSet::new();
        for item in &self.items {
            if item.min >= item.max {
                return Err(SurveyError::BadItem {
                    instrument: self.name.clone(),
                    item: item.id.clone(),
                    reason: format!("min {} not below max {}", item.min, item.max),
                });
            }
            if !ids.insert(item.id.as_str()) {
                return Err(SurveyError::BadItem {
                    instrument: self.name.clone(),
                    item: item.id.clone(),
                    reason: "duplicate item id".to_string(),
                });
            }
        }
        if self.kind == InstrumentKind::Subjective && self.flip_for_alignment {
            return Err(SurveyError::BadInstrument {
                instrument: self.name.clone(),
                reason: "subjective instruments must not set flip".to_string(),
            });
        }
        match &self.rule {
            ScoringRule::SumAll { .. } | ScoringRule::PassThrough => {}
            ScoringRule::SumGroups { groups } => {
                let mut seen = BTreeSet::new();
                for group in groups {
                    for id in &group.items {
                        self.require_item(id)?;
                        if !seen.insert(id.as_str()) {
                            return Err(SurveyError::BadInstrument {
                                instrument: self.name.clone(),
                                reason: format!("item {id} appears in more than one group"),
                            });
                        }
                    }
                }
            }
            ScoringRule::HvltComposites {
                trial1,
                trial2,
                trial3,
                delayed_recall,
                recognition_true_pos,
                recognition_false_pos,
            } => {
                for id in [
                    trial1,
                    trial2,
                    trial3,
                    delayed_recall,
                    recognition_true_pos,
                    recognition_false_pos,
                ] {
                    self.require_item(id)?;
                }
            }
            ScoringRule::DropThenPassThrough { dropped } => {
                for id in dropped {
                    self.require_item(id)?;
                }
            }
            ScoringRule::SingleScore { item, .. } => {
                self.require_item(item)?;
            }
        }
        Ok(())
    }

    /// Feature names this instrument produces, in scoring order.
    pub fn feature_names(&self) -> Vec<String> {
        match &self.rule {
            ScoringRule::SumAll { feature } => vec![feature.clone()],
            ScoringRule::PassThrough => self.items.iter().map(|i| i.id.clone()).collect(),
            ScoringRule::SumGroups { groups } => {
                groups.iter().map(|g| g.feature.clone()).collect()
            }
            ScoringRule::HvltComposites { .. } => vec![
                format!("{}_total_recall", self.name),
                format!("{}_delayed_recall", self.name),
                format!("{}_retention_pct", self.name),
                format!("{}_discrimination", self.name),
            ],
            ScoringRule::DropThenPassThrough { dropped } => self
                .items
                .iter()
                .filter(|i| !dropped.contains(&i.id))
                .map(|i| i.id.clone())
                .collect(),
            ScoringRule::SingleScore { feature, .. } => vec![feature.clone()],
        }
    }

    /// Theoretical (min, max) of each feature, derived from the item ranges
    /// so direction alignment never depends on observed data. Retention is
    /// treated as a 0-100 percentage.
    pub fn feature_ranges(&self) -> Vec<(String, f64, f64)> {
        let item_range = |id: &str| {
            let item = self.item(id).expect("validated rule reference");
            (item.min as f64, item.max as f64)
        };
        match &self.rule {
            ScoringRule::SumAll { feature } => {
                let min: i64 = self.items.iter().map(|i| i.min).sum();
                let max: i64 = self.items.iter().map(|i| i.max).sum();
                vec![(feature.clone(), min as f64, max as f64)]
            }
            ScoringRule::PassThrough => self
                .items
                .iter()
                .map(|i| (i.id.clone(), i.min as f64, i.max as f64))
                .collect(),
            ScoringRule::SumGroups { groups } => groups
                .iter()
                .map(|g| {
                    let (mut min, mut max) = (0.0, 0.0);
                    for id in &g.items {
                        let (lo, hi) = item_range(id);
                        min += lo;
                        max += hi;
                    }
                    (g.feature.clone(), min, max)
                })
                .collect(),
            ScoringRule::HvltComposites {
                trial1,
                trial2,
                trial3,
                delayed_recall,
                recognition_true_pos,
                recognition_false_pos,
            } => {
                let sum3_min = item_range(trial1).0 + item_range(trial2).0 + item_range(trial3).0;
                let sum3_max = item_range(trial1).1 + item_range(trial2).1 + item_range(trial3).1;
                let delayed = item_range(delayed_recall);
                let tp = item_range(recognition_true_pos);
                let fp = item_range(recognition_false_pos);
                let names = self.feature_names();
                vec![
                    (names[0].clone(), sum3_min, sum3_max),
                    (names[1].clone(), delayed.0, delayed.1),
                    (names[2].clone(), 0.0, 100.0),
                    (names[3].clone(), tp.0 - fp.1, tp.1 - fp.0),
                ]
            }
            ScoringRule::DropThenPassThrough { dropped } => self
                .items
                .iter()
                .filter(|i| !dropped.contains(&i.id))
                .map(|i| (i.id.clone(), i.min as f64, i.max as f64))
                .collect(),
            ScoringRule::SingleScore { item, feature } => {
                let (min, max) = item_range(item);
                vec![(feature.clone(), min, max)]
            }
        }
    }
}

/// Reflects a reverse-keyed response onto the instrument's natural direction:
/// `min + max - value`, the unique order-inverting involution on the range.
pub fn reverse_item(value: i64, item: &ItemSpec) -> Result<i64, SurveyError> {
    if value < item.min || value > item.max {
        return Err(SurveyError::OutOfRange {
            instrument: String::new(),
            item: item.id.clone(),
            value,
            min: item.min,
            max: item.max,
        });
    }
    Ok(item.min + item.max - value)
}

/// The four derived memory composites from the raw recall/recognition scores:
/// total recall over the three learning trials (0-36), delayed recall (0-12),
/// retention percent `100 * delayed / max(trial2, trial3)` (0 when the
/// denominator is 0), and the recognition discrimination index
/// `true_pos - false_pos`.
pub fn hvlt_composites(
    trial1: i64,
    trial2: i64,
    trial3: i64,
    delayed_recall: i64,
    recognition_true_pos: i64,
    recognition_false_pos: i64,
) -> Result<[f64; 4], SurveyError> {
    for score in [
        trial1,
        trial2,
        trial3,
        delayed_recall,
        recognition_true_pos,
        recognition_false_pos,
    ] {
        if !(0..=12).contains(&score) {
            return Err(SurveyError::HvltOutOfRange(score));
        }
    }
    let total = (trial1 + trial2 + trial3) as f64;
    let delayed = delayed_recall as f64;
    let denom = trial2.max(trial3) as f64;
    let retention = if denom == 0.0 {
        0.0
    } else {
        100.0 * delayed / denom
    };
    let discrimination = (recognition_true_pos - recognition_false_pos) as f64;
    Ok([total, delayed, retention, discrimination])
}

/// Looks up an item response, validates its range, and applies reversal if
/// the item is reverse-keyed. `Ok(None)` means missing.
fn resolved_value(
    spec: &InstrumentSpec,
    record: &ResponseRecord,
    item_id: &str,
) -> Result<Option<i64>, SurveyError> {
    let item = spec.require_item(item_id)?;
    let Some(&raw) = record.values.get(item_id) else {
        return Ok(None);
    };
    if raw < item.min || raw > item.max {
        return Err(SurveyError::OutOfRange {
            instrument: spec.name.clone(),
            item: item_id.to_string(),
            value: raw,
            min: item.min,
            max: item.max,
        });
    }
    let value = if item.reverse {
        item.min + item.max - raw
    } else {
        raw
    };
    Ok(Some(value))
}

/// Sums resolved values over the given item ids; any missing contributor
/// makes the whole sum missing (partial sums are never produced).
fn sum_items<'a>(
    spec: &InstrumentSpec,
    record: &ResponseRecord,
    ids: impl Iterator<Item = &'a str>,
) -> Result<Option<f64>, SurveyError> {
    let mut total = 0i64;
    for id in ids {
        match resolved_value(spec, record, id)? {
            Some(v) => total += v,
            None => return Ok(None),
        }
    }
    Ok(Some(total as f64))
}

/// Scores one record against its instrument spec, producing the instrument's
/// features in scoring order. Missing contributing items propagate to
/// missing features.
pub fn score_instrument(
    spec: &InstrumentSpec,
    record: &ResponseRecord,
) -> Result<Vec<(String, Option<f64>)>, SurveyError> {
    if record.instrument != spec.name {
        return Err(SurveyError::InstrumentMismatch {
            expected: spec.name.clone(),
            found: record.instrument.clone(),
        });
    }
    for id in record.values.keys() {
        if spec.item(id).is_none() {
            return Err(SurveyError::UnexpectedItem {
                instrument: spec.name.clone(),
                item: id.clone(),
            });
        }
    }
    let features = match &spec.rule {
        ScoringRule::SumAll { feature } => {
            let value = sum_items(spec, record, spec.items.iter().map(|i| i.id.as_str()))?;
            vec![(feature.clone(), value)]
        }
        ScoringRule::PassThrough => spec
            .items
            .iter()
            .map(|item| {
                let value = resolved_value(spec, record, &item.id)?;
                Ok((item.id.clone(), value.map(|v| v as f64)))
            })
            .collect::<Result<Vec<_>, SurveyError>>()?,
        ScoringRule::SumGroups { groups } => groups
            .iter()
            .map(|g| {
                let value = sum_items(spec, record, g.items.iter().map(String::as_str))?;
                Ok((g.feature.clone(), value))
            })
            .collect::<Result<Vec<_>, SurveyError>>()?,
        ScoringRule::HvltComposites {
            trial1,
            trial2,
            trial3,
            delayed_recall,
            recognition_true_pos,
            recognition_false_pos,
        } => {
            let t1 = resolved_value(spec, record, trial1)?;
            let t2 = resolved_value(spec, record, trial2)?;
            let t3 = resolved_value(spec, record, trial3)?;
            let delayed = resolved_value(spec, record, delayed_recall)?;
            let tp = resolved_value(spec, record, recognition_true_pos)?;
            let fp = resolved_value(spec, record, recognition_false_pos)?;
            let names = spec.feature_names();
            // Each composite is missing exactly when one of its own
            // contributors is missing.
            let complete = match (t1, t2, t3, delayed, tp, fp) {
                (Some(t1), Some(t2), Some(t3), Some(d), Some(tp), Some(fp)) => {
                    Some(hvlt_composites(t1, t2, t3, d, tp, fp)?)
                }
                _ => None,
            };
            match complete {
                Some([total, delayed, retention, discrimination]) => vec![
                    (names[0].clone(), Some(total)),
                    (names[1].clone(), Some(delayed)),
                    (names[2].clone(), Some(retention)),
                    (names[3].clone(), Some(discrimination)),
                ],
                None => {
                    let total = match (t1, t2, t3) {
                        (Some(a), Some(b), Some(c)) => Some((a + b + c) as f64),
                        _ => None,
                    };
                    let retention = match (delayed, t2, t3) {
                        (Some(d), Some(b), Some(c)) => {
                            let denom = b.max(c) as f64;
                            Some(if denom == 0.0 {
                                0.0
                            } else {
                                100.0 * d as f64 / denom
                            })
                        }
                        _ => None,
                    };
                    let discrimination = match (tp, fp) {
                        (Some(tp), Some(fp)) => Some((tp - fp) as f64),
                        _ => None,
                    };
                    vec![
                        (names[0].clone(), total),
                        (names[1].clone(), delayed.map(|v| v as f64)),
                        (names[2].clone(), retention),
                        (names[3].clone(), discrimination),
                    ]
                }
            }
        }
        ScoringRule::DropThenPassThrough { dropped } => spec
            .items
            .iter()
            .filter(|item| !dropped.contains(&item.id))
            .map(|item| {
                let value = resolved_value(spec, record, &item.id)?;
                Ok((item.id.clone(), value.map(|v| v as f64)))
            })
            .collect::<Result<Vec<_>, SurveyError>>()?,
        ScoringRule::SingleScore { item, feature } => {
            let value = resolved_value(spec, record, item)?;
            vec![(feature.clone(), value.map(|v| v as f64))]
        }
    };
    Ok(features)
}

/// Reflects an instrument's features onto the shared higher-is-worse
/// direction when `flip_for_alignment` is set: `f -> f_min + f_max - f` with
/// the theoretical per-feature range. Identity otherwise.
pub fn align_direction(
    features: Vec<(String, Option<f64>)>,
    spec: &InstrumentSpec,
) -> Vec<(String, Option<f64>)> {
    if !spec.flip_for_alignment {
        return features;
    }
    let ranges: BTreeMap<String, (f64, f64)> = spec
        .feature_ranges()
        .into_iter()
        .map(|(name, min, max)| (name, (min, max)))
        .collect();
    features
        .into_iter()
        .map(|(name, value)| {
            let flipped = value.map(|v| {
                let (min, max) = ranges[&name];
                min + max - v
            });
            (name, flipped)
        })
        .collect()
}

/// Scores every participant against the given instruments and assembles the
/// feature matrix (battery order defines feature order; participants appear
/// in first-appearance order). Instruments without a record contribute
/// missing features.
pub fn score_battery(
    instruments: &[InstrumentSpec],
    records: &[ResponseRecord],
) -> Result<FeatureMatrix, SurveyError> {
    for spec in instruments {
        spec.validate()?;
    }
    let mut feature_names = Vec::new();
    for spec in instruments {
        for name in spec.feature_names() {
            feature_names.push(name);
        }
    }

    let known: BTreeSet<&str> = instruments.iter().map(|s| s.name.as_str()).collect();
    let mut order: Vec<&str> = Vec::new();
    let mut participants: BTreeMap<&str, (CohortLabel, BTreeMap<&str, &ResponseRecord>)> =
        BTreeMap::new();
    for record in records {
        if !known.contains(record.instrument.as_str()) {
            return Err(SurveyError::UnknownInstrument(record.instrument.clone()));
        }
        let entry = participants
            .entry(record.participant_id.as_str())
            .or_insert_with(|| {
                order.push(record.participant_id.as_str());
                (record.cohort, BTreeMap::new())
            });
        if entry.0 != record.cohort {
            return Err(SurveyError::CohortConflict {
                participant: record.participant_id.clone(),
                first: entry.0,
                second: record.cohort,
            });
        }
        if entry
            .1
            .insert(record.instrument.as_str(), record)
            .is_some()
        {
            return Err(SurveyError::DuplicateRecord {
                participant: record.participant_id.clone(),
                instrument: record.instrument.clone(),
            });
        }
    }
    if order.is_empty() {
        return Err(SurveyError::NoParticipants);
    }

    let mut rows = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len());
    let mut ids = Vec::with_capacity(order.len());
    for pid in &order {
        let (cohort, by_instrument) = &participants[pid];
        let mut row = Vec::with_capacity(feature_names.len());
        for spec in instruments {
            match by_instrument.get(spec.name.as_str()) {
                Some(record) => {
                    let scored = score_instrument(spec, record)?;
                    let aligned = align_direction(scored, spec);
                    for (_, value) in aligned {
                        row.push(value.unwrap_or(f64::NAN));
                    }
                }
                None => row.extend(std::iter::repeat_n(f64::NAN, spec.feature_names().len())),
            }
        }
        rows.push(row);
        labels.push(*cohort);
        ids.push(pid.to_string());
    }
    Ok(FeatureMatrix::new(feature_names, rows, labels, ids)?)
}

#[cfg(test)]
mod tests;
