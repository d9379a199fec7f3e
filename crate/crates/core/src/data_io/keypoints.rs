use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Keypoint, KeypointFrame, NUM_JOINTS};

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    video_id: String,
    camera: u32,
    frame_index: u64,
    joints: Vec<[f64; 3]>,
}

/// Streaming reader over a keypoint JSON Lines source.
///
/// Blank lines are skipped. Frames must be in ascending `frame_index` order
/// within each `(video_id, camera)` stream.
pub struct KeypointReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    last_index: HashMap<(String, u32), u64>,
}

impl<R: BufRead> KeypointReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, last_index: HashMap::new() }
    }

    fn parse(&mut self, line: &str) -> Result<KeypointFrame> {
        let line_no = self.line_no;
        let rec: FrameRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        if rec.joints.len() != NUM_JOINTS {
            return Err(Error::Schema(format!(
                "line {line_no}: {} joints, expected {NUM_JOINTS}",
                rec.joints.len()
            )));
        }
        let key = (rec.video_id.clone(), rec.camera);
        if let Some(&prev) = self.last_index.get(&key) {
            if rec.frame_index <= prev {
                return Err(Error::Schema(format!(
                    "line {line_no}: frame_index {} does not follow {prev} for video {} camera {}",
                    rec.frame_index, rec.video_id, rec.camera
                )));
            }
        }
        self.last_index.insert(key, rec.frame_index);
        let joints = rec.joints.iter().map(|j| Keypoint::new(j[0], j[1], j[2])).collect();
        KeypointFrame::new(rec.video_id, rec.camera, rec.frame_index, joints).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("line {line_no}: {msg}")),
            other => other,
        })
    }
}

impl<R: BufRead> Iterator for KeypointReader<R> {
    type Item = Result<KeypointFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

pub fn read_keypoints(path: &Path) -> Result<KeypointReader<BufReader<File>>> {
    Ok(KeypointReader::new(BufReader::new(File::open(path)?)))
}

pub fn write_keypoints<W: Write>(mut out: W, frames: &[KeypointFrame]) -> Result<()> {
    for f in frames {
        let rec = FrameRecord {
            video_id: f.video_id.clone(),
            camera: f.camera,
            frame_index: f.frame_index,
            joints: f.joints.iter().map(|j| [j.x, j.y, j.c]).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
