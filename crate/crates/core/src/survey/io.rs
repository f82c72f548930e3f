//! Long-format response CSV: one row per answered item, columns
//! `participant_id,cohort,instrument,item_id,value`. Missing items simply
//! have no row.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::CohortLabel;

use super::{ResponseRecord, SurveyError};

pub fn write_responses_csv<W: Write>(
    records: &[ResponseRecord],
    w: W,
) -> Result<(), SurveyError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["participant_id", "cohort", "instrument", "item_id", "value"])?;
    for record in records {
        for (item, value) in &record.values {
            wtr.write_record([
                record.participant_id.as_str(),
                record.cohort.as_str(),
                record.instrument.as_str(),
                item.as_str(),
                &value.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_responses_csv_path(
    records: &[ResponseRecord],
    path: &Path,
) -> Result<(), SurveyError> {
    let file = std::fs::File::create(path)?;
    write_responses_csv(records, std::io::BufWriter::new(file))
}

pub fn read_responses_csv<R: Read>(r: R) -> Result<Vec<ResponseRecord>, SurveyError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut records: Vec<ResponseRecord> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let participant_id = row[0].to_string();
        let cohort = CohortLabel::parse(&row[1])?;
        let instrument = row[2].to_string();
        let item = row[3].to_string();
        let value: i64 = row[4].parse().map_err(|e| {
            SurveyError::BadInstrument {
                instrument: instrument.clone(),
                reason: format!("bad value {:?} for item {item}: {e}", &row[4]),
            }
        })?;
        let key = (participant_id.clone(), instrument.clone());
        let idx = *index.entry(key).or_insert_with(|| {
            records.push(ResponseRecord {
                participant_id: participant_id.clone(),
                cohort,
                instrument: instrument.clone(),
                values: Default::default(),
            });
            records.len() - 1
        });
        let record = &mut records[idx];
        if record.cohort != cohort {
            return Err(SurveyError::CohortConflict {
                participant: participant_id,
                first: record.cohort,
                second: cohort,
            });
        }
        if record.values.insert(item.clone(), value).is_some() {
            return Err(SurveyError::BadInstrument {
                instrument,
                reason: format!("duplicate response for item {item} of {participant_id}"),
            });
        }
    }
    Ok(records)
}

pub fn read_responses_csv_path(path: &Path) -> Result<Vec<ResponseRecord>, SurveyError> {
    let file = std::fs::File::open(path)?;
    read_responses_csv(std::io::BufReader::new(file))
}
