//! Capture ingestion.
//!
//! Two text formats are understood:
//!
//! ```text
//! (1500000000.000000) can0 0A15#0001020304050607      candump -L
//! timestamp,id,dlc,payload_hex                        CSV header
//! 1500000000.000000,0x0A15,8,0001020304050607
//! ```
//!
//! Blank lines and lines starting with `#` are ignored in both.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, ParseFailure, Result};

pub const MAX_STANDARD_ID: u32 = 0x7FF;
pub const MAX_EXTENDED_ID: u32 = 0x1FFF_FFFF;
pub const MAX_DLC: usize = 8;

/// One timestamped classic CAN data frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanFrame {
    timestamp_us: u64,
    arbitration_id: u32,
    extended: bool,
    dlc: u8,
    data: [u8; MAX_DLC],
}

impl CanFrame {
    pub fn new(
        timestamp_us: u64,
        arbitration_id: u32,
        extended: bool,
        payload: &[u8],
    ) -> Result<Self> {
        if payload.len() > MAX_DLC {
            return Err(Error::InvalidFrame(format!(
                "payload of {} bytes exceeds {MAX_DLC}",
                payload.len()
            )));
        }
        let limit = if extended {
            MAX_EXTENDED_ID
        } else {
            MAX_STANDARD_ID
        };
        if arbitration_id > limit {
            return Err(Error::InvalidFrame(format!(
                "id 0x{arbitration_id:X} does not fit a {} frame",
                if extended { "extended" } else { "standard" }
            )));
        }
        let mut data = [0u8; MAX_DLC];
        data[..payload.len()].copy_from_slice(payload);
        Ok(CanFrame {
            timestamp_us,
            arbitration_id,
            extended,
            dlc: payload.len() as u8,
            data,
        })
    }

    /// Builds a frame, classing IDs above `0x7FF` as extended.
    pub fn with_id(timestamp_us: u64, arbitration_id: u32, payload: &[u8]) -> Result<Self> {
        Self::new(
            timestamp_us,
            arbitration_id,
            arbitration_id > MAX_STANDARD_ID,
            payload,
        )
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    /// Seconds since the epoch.
    pub fn timestamp(&self) -> f64 {
        self.timestamp_us as f64 / 1e6
    }

    pub fn arbitration_id(&self) -> u32 {
        self.arbitration_id
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub fn dlc(&self) -> usize {
        self.dlc as usize
    }

    pub fn payload(&self) -> &[u8] {
        &self.data[..self.dlc as usize]
    }

    /// Payload packed MSB-first into a `u64`, bit position 0 at bit 63.
    pub fn bits(&self) -> u64 {
        u64::from_be_bytes(self.data)
    }

    pub fn key(&self) -> IdKey {
        IdKey {
            id: self.arbitration_id,
            dlc: self.dlc,
        }
    }
}

/// An ordered capture.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    frames: Vec<CanFrame>,
    source: String,
}

impl Trace {
    /// Orders frames by timestamp; ties keep their given order.
    pub fn new(mut frames: Vec<CanFrame>, source: impl Into<String>) -> Self {
        if !is_chronological(&frames) {
            frames.sort_by_key(CanFrame::timestamp_us);
        }
        Trace {
            frames,
            source: source.into(),
        }
    }

    pub fn frames(&self) -> &[CanFrame] {
        &self.frames
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn into_frames(self) -> Vec<CanFrame> {
        self.frames
    }
}

fn is_chronological(frames: &[CanFrame]) -> bool {
    frames
        .windows(2)
        .all(|w| w[0].timestamp_us <= w[1].timestamp_us)
}

/// Partition key: a payload layout is assumed fixed per (ID, DLC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IdKey {
    pub id: u32,
    pub dlc: u8,
}

impl IdKey {
    pub fn bit_width(&self) -> usize {
        8 * self.dlc as usize
    }
}

impl fmt::Display for IdKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (dlc {})", crate::format_id(self.id), self.dlc)
    }
}

/// Frames of a single (ID, DLC) group in capture order.
#[derive(Debug, Clone, PartialEq)]
pub struct IdTrace {
    key: IdKey,
    frames: Vec<CanFrame>,
}

impl IdTrace {
    pub fn new(arbitration_id: u32, dlc: usize, frames: Vec<CanFrame>) -> Result<Self> {
        if dlc > MAX_DLC {
            return Err(Error::InconsistentTrace(format!(
                "dlc {dlc} exceeds {MAX_DLC}"
            )));
        }
        if let Some((k, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.arbitration_id != arbitration_id || f.dlc() != dlc)
        {
            return Err(Error::InconsistentTrace(format!(
                "frame {k} has id 0x{:X}/dlc {}, expected 0x{arbitration_id:X}/dlc {dlc}",
                f.arbitration_id,
                f.dlc()
            )));
        }
        Ok(IdTrace {
            key: IdKey {
                id: arbitration_id,
                dlc: dlc as u8,
            },
            frames,
        })
    }

    pub fn key(&self) -> IdKey {
        self.key
    }

    pub fn arbitration_id(&self) -> u32 {
        self.key.id
    }

    pub fn dlc(&self) -> usize {
        self.key.dlc as usize
    }

    pub fn bit_width(&self) -> usize {
        self.key.bit_width()
    }

    pub fn frames(&self) -> &[CanFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Result of [`partition_by_id`].
#[derive(Debug, Clone, Default)]
pub struct Partition {
    pub groups: BTreeMap<IdKey, IdTrace>,
    /// IDs observed with more than one DLC, ascending.
    pub mixed_dlc: Vec<u32>,
}

/// Splits a trace into per-(ID, DLC) groups.
pub fn partition_by_id(trace: &Trace) -> Partition {
    let mut buckets: BTreeMap<IdKey, Vec<CanFrame>> = BTreeMap::new();
    for frame in trace.frames() {
        buckets.entry(frame.key()).or_default().push(*frame);
    }

    let mut mixed_dlc: Vec<u32> = Vec::new();
    let mut last_id = None;
    for key in buckets.keys() {
        if last_id == Some(key.id) && mixed_dlc.last() != Some(&key.id) {
            mixed_dlc.push(key.id);
        }
        last_id = Some(key.id);
    }
    if !mixed_dlc.is_empty() {
        let ids: Vec<String> = mixed_dlc.iter().map(|&id| crate::format_id(id)).collect();
        log::warn!(
            "ids observed with more than one dlc, analysed per dlc: {}",
            ids.join(", ")
        );
    }

    let groups = buckets
        .into_iter()
        .map(|(key, frames)| (key, IdTrace { key, frames }))
        .collect();
    Partition { groups, mixed_dlc }
}

fn parse_timestamp_us(text: &str) -> Option<u64> {
    let (secs, frac) = match text.split_once('.') {
        Some((s, f)) => (s, f),
        None => (text, ""),
    };
    if secs.is_empty() || !secs.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 9 {
        return None;
    }
    if text.contains('.') && frac.is_empty() {
        return None;
    }
    let secs: u64 = secs.parse().ok()?;
    let mut micros = 0u64;
    for i in 0..6 {
        let digit = frac.as_bytes().get(i).map_or(0, |b| (b - b'0') as u64);
        micros = micros * 10 + digit;
    }
    secs.checked_mul(1_000_000)?.checked_add(micros)
}

fn decode_payload(line: &str, hex_text: &str) -> Result<Vec<u8>> {
    if !hex_text.len().is_multiple_of(2) {
        return Err(Error::parse(line, ParseFailure::OddLengthPayload));
    }
    if hex_text.len() > 2 * MAX_DLC {
        return Err(Error::parse(
            line,
            ParseFailure::PayloadTooLong(hex_text.len() / 2),
        ));
    }
    hex::decode(hex_text).map_err(|_| Error::parse(line, ParseFailure::InvalidHex))
}

fn classify_id(line: &str, id: u32, force_extended: bool) -> Result<bool> {
    if id > MAX_EXTENDED_ID {
        return Err(Error::parse(line, ParseFailure::IdOutOfRange(id)));
    }
    Ok(force_extended || id > MAX_STANDARD_ID)
}

/// Parses one `(<ts>) <iface> <ID>#<HEXDATA>` record.
///
/// IDs written with more than three hex digits, or above `0x7FF`, are
/// extended.
pub fn parse_candump_line(line: &str) -> Result<CanFrame> {
    let text = line.trim();
    let mut fields = text.split_ascii_whitespace();
    let ts = fields
        .next()
        .ok_or_else(|| Error::parse(line, ParseFailure::MissingField("timestamp")))?;
    let ts = ts
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .and_then(parse_timestamp_us)
        .ok_or_else(|| Error::parse(line, ParseFailure::MalformedTimestamp))?;
    fields
        .next()
        .ok_or_else(|| Error::parse(line, ParseFailure::MissingField("interface")))?;
    let raw = fields
        .next()
        .ok_or_else(|| Error::parse(line, ParseFailure::MissingField("frame")))?;

    let (id_text, data) = raw
        .split_once('#')
        .ok_or_else(|| Error::parse(line, ParseFailure::MalformedFrame))?;
    if id_text.is_empty() || id_text.len() > 8 || !id_text.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::parse(line, ParseFailure::InvalidId));
    }
    let id = u32::from_str_radix(id_text, 16)
        .map_err(|_| Error::parse(line, ParseFailure::InvalidId))?;
    let extended = classify_id(line, id, id_text.len() > 3)?;

    if data.starts_with('#') {
        return Err(Error::parse(line, ParseFailure::Unsupported("CAN FD")));
    }
    if data.starts_with('R') || data.starts_with('r') {
        return Err(Error::parse(
            line,
            ParseFailure::Unsupported("remote frames"),
        ));
    }
    let payload = decode_payload(line, data)?;
    CanFrame::new(ts, id, extended, &payload)
}

/// How the CSV `id` column is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdRadix {
    #[default]
    Hex,
    Decimal,
}

/// Column positions for [`parse_csv_line`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub timestamp: usize,
    pub id: usize,
    pub dlc: usize,
    pub payload: usize,
    pub id_radix: IdRadix,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: 0,
            id: 1,
            dlc: 2,
            payload: 3,
            id_radix: IdRadix::Hex,
        }
    }
}

impl CsvSchema {
    /// Locates the four required columns by header name.
    pub fn from_header(header: &str) -> Result<Self> {
        let names: Vec<String> = header
            .split(',')
            .map(|c| c.trim().to_ascii_lowercase())
            .collect();
        let find = |name: &'static str| {
            names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::parse(header, ParseFailure::MissingField(name)))
        };
        Ok(CsvSchema {
            timestamp: find("timestamp")?,
            id: find("id")?,
            dlc: find("dlc")?,
            payload: find("payload_hex")?,
            id_radix: IdRadix::Hex,
        })
    }
}

/// Parses one CSV record under `schema`.
pub fn parse_csv_line(line: &str, schema: &CsvSchema) -> Result<CanFrame> {
    let text = line.trim();
    let cols: Vec<&str> = text.split(',').map(str::trim).collect();
    let col = |idx: usize, name: &'static str| {
        cols.get(idx)
            .copied()
            .ok_or_else(|| Error::parse(line, ParseFailure::MissingField(name)))
    };

    let ts = parse_timestamp_us(col(schema.timestamp, "timestamp")?)
        .ok_or_else(|| Error::parse(line, ParseFailure::MalformedTimestamp))?;

    let id_text = col(schema.id, "id")?;
    let prefixed = id_text
        .strip_prefix("0x")
        .or_else(|| id_text.strip_prefix("0X"));
    let id = match (prefixed, schema.id_radix) {
        (Some(hex), _) => crate::parse_id(hex),
        (None, IdRadix::Hex) => crate::parse_id(id_text),
        (None, IdRadix::Decimal) => id_text.parse::<u32>().ok(),
    }
    .ok_or_else(|| Error::parse(line, ParseFailure::InvalidId))?;
    let extended = classify_id(line, id, false)?;

    let dlc: usize = col(schema.dlc, "dlc")?
        .parse()
        .ok()
        .filter(|&d| d <= MAX_DLC)
        .ok_or_else(|| Error::parse(line, ParseFailure::InvalidDlc))?;
    let payload = decode_payload(line, col(schema.payload, "payload_hex")?)?;
    if payload.len() != dlc {
        return Err(Error::parse(
            line,
            ParseFailure::DlcMismatch {
                dlc,
                bytes: payload.len(),
            },
        ));
    }
    CanFrame::new(ts, id, extended, &payload)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaptureFormat {
    #[default]
    Candump,
    Csv,
}

/// Strict aborts on the first malformed line; lenient skips and counts it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// Bookkeeping from [`load_trace`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub lines: usize,
    pub frames: usize,
    pub skipped: usize,
    /// Frames were out of timestamp order and had to be re-sorted.
    pub reordered: bool,
    pub per_id: BTreeMap<u32, usize>,
}

/// Reads a capture file.
pub fn load_trace(
    path: &Path,
    format: CaptureFormat,
    mode: ParseMode,
) -> Result<(Trace, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(
        BufReader::new(file),
        &path.display().to_string(),
        format,
        mode,
    )
    .map_err(|e| match e {
        Error::Write(io) => Error::io(path, io),
        other => other,
    })
}

/// Reads a capture from any buffered reader.
pub fn read_trace<R: BufRead>(
    mut reader: R,
    source: &str,
    format: CaptureFormat,
    mode: ParseMode,
) -> Result<(Trace, LoadReport)> {
    let mut report = LoadReport::default();
    let mut frames = Vec::new();
    let mut schema: Option<CsvSchema> = None;
    let mut buf = String::with_capacity(128);

    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        report.lines += 1;
        let line = buf.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }

        let parsed = match format {
            CaptureFormat::Candump => parse_candump_line(line),
            CaptureFormat::Csv => match schema {
                Some(ref s) => parse_csv_line(line, s),
                None => {
                    let first = line.split(',').next().unwrap_or("").trim();
                    if first.starts_with(|c: char| c.is_ascii_alphabetic()) {
                        match CsvSchema::from_header(line) {
                            Ok(s) => {
                                schema = Some(s);
                                continue;
                            }
                            Err(e) => Err(e),
                        }
                    } else {
                        let s = CsvSchema::default();
                        schema = Some(s);
                        parse_csv_line(line, &s)
                    }
                }
            },
        };

        match parsed {
            Ok(frame) => {
                *report.per_id.entry(frame.arbitration_id()).or_default() += 1;
                frames.push(frame);
            }
            Err(e) => match mode {
                ParseMode::Strict => {
                    return Err(Error::AtLine {
                        line_no: report.lines,
                        source: Box::new(e),
                    })
                }
                ParseMode::Lenient => {
                    log::warn!("{source}:{}: skipped: {e}", report.lines);
                    report.skipped += 1;
                }
            },
        }
    }

    report.frames = frames.len();
    report.reordered = !is_chronological(&frames);
    if report.reordered {
        log::warn!("{source}: frames out of timestamp order, re-sorted");
    }
    Ok((Trace::new(frames, source), report))
}

/// Renders a frame as a compact candump record.
pub fn format_candump_line(frame: &CanFrame, interface: &str) -> String {
    let secs = frame.timestamp_us / 1_000_000;
    let micros = frame.timestamp_us % 1_000_000;
    let id = if frame.extended {
        format!("{:08X}", frame.arbitration_id)
    } else {
        format!("{:03X}", frame.arbitration_id)
    };
    format!(
        "({secs}.{micros:06}) {interface} {id}#{}",
        hex::encode_upper(frame.payload())
    )
}

pub fn write_candump<W: Write>(trace: &Trace, interface: &str, mut w: W) -> Result<()> {
    for frame in trace.frames() {
        writeln!(w, "{}", format_candump_line(frame, interface))?;
    }
    Ok(())
}
