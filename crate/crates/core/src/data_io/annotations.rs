use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 16;

/// Ground-truth activity, `[start_frame, end_frame)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub class_id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.class_id >= NUM_CLASSES {
            return Err(Error::Schema(format!("class_id {} outside [0, {NUM_CLASSES})", self.class_id)));
        }
        if self.start_frame >= self.end_frame {
            return Err(Error::Schema(format!(
                "annotation start {} is not before end {}",
                self.start_frame, self.end_frame
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub class_id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub peak_height: f64,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        AnnotationRecord {
            video_id: self.video_id.clone(),
            class_id: self.class_id,
            start_frame: self.start_frame,
            end_frame: self.end_frame,
        }
        .validate()?;
        if !(0.0..=1.0).contains(&self.peak_height) {
            return Err(Error::Schema(format!("peak_height {} outside [0, 1]", self.peak_height)));
        }
        Ok(())
    }
}

fn read_records<T, R>(reader: R, check: impl Fn(&T) -> Result<()>) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec: T = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        check(&rec).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_records<T: Serialize, W: Write>(writer: W, header: &[&str], records: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(header)?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>> {
    read_records(reader, AnnotationRecord::validate)
}

pub fn write_annotations<W: Write>(writer: W, records: &[AnnotationRecord]) -> Result<()> {
    write_records(writer, &["video_id", "class_id", "start_frame", "end_frame"], records)
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRecord>> {
    read_records(reader, PredictionRecord::validate)
}

pub fn write_predictions<W: Write>(writer: W, records: &[PredictionRecord]) -> Result<()> {
    write_records(writer, &["video_id", "class_id", "start_frame", "end_frame", "peak_height"], records)
}
