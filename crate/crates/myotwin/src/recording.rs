//! On-disk session recordings: one CSV row per frame, a raw-EMG sidecar and
//! the calibration maxima.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the in-memory recording exactly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use myotwin_core::emgproc::{MaxActivations, MuscleDistribution};
use myotwin_core::estimator::Label;
use myotwin_core::protocol::{FrameRecord, SessionRecording};
use myotwin_core::{Point2, Vec2, EMG_RATE_HZ, MUSCLES, MUSCLE_NAMES};
use thiserror::Error;

pub const RECORDING_FILE: &str = "recording.csv";
pub const EMG_FILE: &str = "emg.bin";
pub const CALIBRATION_FILE: &str = "calibration.csv";

pub const EMG_MAGIC: &[u8; 4] = b"EMG0";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file} row {row}: bad value `{value}` in column `{column}`")]
    BadValue {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("EMG sidecar: {0}")]
    Sidecar(String),
}

pub fn frame_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "t_session",
        "trial",
        "neutral_x1",
        "neutral_x2",
        "target_x1",
        "target_x2",
        "actual_x1",
        "actual_x2",
        "dev_e1",
        "dev_e2",
        "subject_tau1",
        "subject_tau2",
        "impedance_tau1",
        "impedance_tau2",
        "emg_offset",
        "emg_len",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["act", "m", "fatigue"] {
        h.extend(MUSCLE_NAMES.iter().map(|m| format!("{prefix}_{m}")));
        if prefix == "m" {
            h.push("degenerate".into());
        }
    }
    h.push("label_stiffness".into());
    h.push("label_orientation_deg".into());
    h
}

fn frame_row(f: &FrameRecord) -> Vec<String> {
    let mut r = vec![f.t_session.to_string(), f.trial.to_string()];
    for v in [f.neutral, f.target, f.actual, f.deviation, f.subject_torque, f.impedance_torque] {
        r.push(v.x1.to_string());
        r.push(v.x2.to_string());
    }
    r.push(f.emg_offset.to_string());
    r.push(f.emg_len.to_string());
    r.extend(f.activation.iter().map(f64::to_string));
    r.extend(f.distribution.m.iter().map(f64::to_string));
    r.push(u8::from(f.distribution.degenerate).to_string());
    r.extend(f.fatigue.iter().map(f64::to_string));
    match f.label {
        Some(l) => {
            r.push(l.stiffness.to_string());
            r.push(l.orientation_deg.to_string());
        }
        None => {
            r.push(String::new());
            r.push(String::new());
        }
    }
    r
}

pub fn write_frames<W: Write>(out: W, frames: &[FrameRecord]) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(frame_header())?;
    for f in frames {
        w.write_record(frame_row(f))?;
    }
    w.flush()?;
    Ok(())
}

struct Columns {
    file: String,
    index: Vec<usize>,
}

impl Columns {
    fn resolve(file: &str, headers: &csv::StringRecord, wanted: &[String]) -> Result<Self, FormatError> {
        let index = wanted
            .iter()
            .map(|name| {
                headers.iter().position(|h| h == name).ok_or_else(|| FormatError::MissingColumn {
                    file: file.to_string(),
                    column: name.clone(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            file: file.to_string(),
            index,
        })
    }
}

struct RowReader<'a> {
    cols: &'a Columns,
    header: &'a [String],
    rec: &'a csv::StringRecord,
    row: usize,
    next: usize,
}

impl<'a> RowReader<'a> {
    fn raw(&mut self) -> (&'a str, &'a str) {
        let i = self.next;
        self.next += 1;
        (self.rec.get(self.cols.index[i]).unwrap_or(""), &self.header[i])
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T, FormatError> {
        let row = self.row;
        let (value, column) = self.raw();
        value.trim().parse().map_err(|_| FormatError::BadValue {
            file: self.cols.file.clone(),
            row,
            column: column.to_string(),
            value: value.to_string(),
        })
    }

    fn optional(&mut self) -> Result<Option<f64>, FormatError> {
        let rec: &csv::StringRecord = self.rec;
        if rec.get(self.cols.index[self.next]).unwrap_or("").trim().is_empty() {
            self.next += 1;
            Ok(None)
        } else {
            self.parse().map(Some)
        }
    }

    fn vec2(&mut self) -> Result<Vec2, FormatError> {
        Ok(Vec2::new(self.parse()?, self.parse()?))
    }

    fn six(&mut self) -> Result<[f64; MUSCLES], FormatError> {
        let mut out = [0.0; MUSCLES];
        for v in out.iter_mut() {
            *v = self.parse()?;
        }
        Ok(out)
    }
}

pub fn read_frames<R: Read>(input: R, file: &str) -> Result<Vec<FrameRecord>, FormatError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = frame_header();
    let cols = Columns::resolve(file, rdr.headers()?, &header)?;
    let mut frames = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut r = RowReader {
            cols: &cols,
            header: &header,
            rec: &rec,
            row: i + 2,
            next: 0,
        };
        let t_session = r.parse()?;
        let trial = r.parse()?;
        let neutral: Point2 = r.vec2()?;
        let target = r.vec2()?;
        let actual = r.vec2()?;
        let deviation = r.vec2()?;
        let subject_torque = r.vec2()?;
        let impedance_torque = r.vec2()?;
        let emg_offset = r.parse()?;
        let emg_len = r.parse()?;
        let activation = r.six()?;
        let m = r.six()?;
        let degenerate = r.parse::<u8>()? != 0;
        let fatigue = r.six()?;
        let label = match (r.optional()?, r.optional()?) {
            (Some(stiffness), Some(orientation_deg)) => Some(Label {
                stiffness,
                orientation_deg,
            }),
            _ => None,
        };
        frames.push(FrameRecord {
            t_session,
            trial,
            neutral,
            target,
            actual,
            deviation,
            subject_torque,
            impedance_torque,
            emg_offset,
            emg_len,
            activation,
            distribution: MuscleDistribution { m, degenerate },
            fatigue,
            label,
        });
    }
    Ok(frames)
}

/// Header: magic, channel count (u32), sample rate in Hz (u32); then
/// little-endian f32 samples, channels interleaved.
pub fn write_emg<W: Write>(mut out: W, samples: &[[f32; MUSCLES]]) -> io::Result<()> {
    out.write_all(EMG_MAGIC)?;
    out.write_all(&(MUSCLES as u32).to_le_bytes())?;
    out.write_all(&(EMG_RATE_HZ as u32).to_le_bytes())?;
    for s in samples {
        for v in s {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn read_emg<R: Read>(mut input: R) -> Result<Vec<[f32; MUSCLES]>, FormatError> {
    let mut head = [0u8; 12];
    input.read_exact(&mut head).map_err(|_| FormatError::Sidecar("truncated header".into()))?;
    if &head[..4] != EMG_MAGIC {
        return Err(FormatError::Sidecar("bad magic".into()));
    }
    let channels = u32::from_le_bytes(head[4..8].try_into().unwrap());
    let rate = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if channels as usize != MUSCLES || rate != EMG_RATE_HZ as u32 {
        return Err(FormatError::Sidecar(format!("expected {MUSCLES} channels at 2000 Hz, got {channels} at {rate}")));
    }
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let stride = 4 * MUSCLES;
    if body.len() % stride != 0 {
        return Err(FormatError::Sidecar("trailing partial sample".into()));
    }
    Ok(body
        .chunks_exact(stride)
        .map(|c| core::array::from_fn(|i| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().unwrap())))
        .collect())
}

pub fn write_calibration<W: Write>(mut out: W, calib: &MaxActivations) -> io::Result<()> {
    writeln!(out, "muscle,max_activation")?;
    for (name, v) in MUSCLE_NAMES.iter().zip(calib.0) {
        writeln!(out, "{name},{v}")?;
    }
    out.flush()
}

pub fn read_calibration<R: Read>(input: R) -> Result<MaxActivations, FormatError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = [f64::NAN; MUSCLES];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or("");
        let bad = || FormatError::BadValue {
            file: CALIBRATION_FILE.into(),
            row: i + 2,
            column: "max_activation".into(),
            value: rec.get(1).unwrap_or("").into(),
        };
        let idx = MUSCLE_NAMES.iter().position(|m| *m == name).ok_or_else(bad)?;
        out[idx] = rec.get(1).unwrap_or("").parse().map_err(|_| bad())?;
    }
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        return Err(FormatError::MissingColumn {
            file: CALIBRATION_FILE.into(),
            column: MUSCLE_NAMES[i].into(),
        });
    }
    Ok(MaxActivations(out))
}

/// Writes the recording into `dir`; returns the written file names.
pub fn save(dir: &Path, rec: &SessionRecording) -> Result<Vec<&'static str>, FormatError> {
    std::fs::create_dir_all(dir)?;
    write_frames(BufWriter::new(File::create(dir.join(RECORDING_FILE))?), &rec.frames)?;
    write_calibration(BufWriter::new(File::create(dir.join(CALIBRATION_FILE))?), &rec.calibration)?;
    let mut files = vec![RECORDING_FILE, CALIBRATION_FILE];
    if let Some(raw) = &rec.raw_emg {
        write_emg(BufWriter::new(File::create(dir.join(EMG_FILE))?), raw)?;
        files.push(EMG_FILE);
    }
    Ok(files)
}

/// Loads frames from a recording CSV. A calibration file next to it is read
/// when present; the EMG sidecar is not loaded.
pub fn load(csv_path: &Path) -> Result<SessionRecording, FormatError> {
    let name = csv_path.display().to_string();
    let frames = read_frames(BufReader::new(File::open(csv_path)?), &name)?;
    let calib_path = csv_path.with_file_name(CALIBRATION_FILE);
    let calibration = if calib_path.exists() {
        read_calibration(BufReader::new(File::open(calib_path)?))?
    } else {
        MaxActivations::UNIT
    };
    Ok(SessionRecording {
        seed: 0,
        calibration,
        frames,
        raw_emg: None,
    })
}
