//! Labelled IQ container for dataset exchange.
//!
//! A file holds one or more records back to back. Each record, little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SIDQ"
//!      4     2  version (1)
//!      6     1  class label: 0 TvBroadcast, 1 WirelessMic, 2 OtherTvws, 3 Vacant, 0xFF unlabelled
//!      7     1  reserved, zero
//!      8     8  sample rate, Hz (f64)
//!     16     8  center frequency, Hz (f64)
//!     24     8  SNR, dB (f64; NaN when unknown)
//!     32     8  capture time, ms since run start (u64)
//!     40     8  sample count N (u64)
//!     48    8N  interleaved I, Q (f32 pairs)
//! ```

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex32;
use thiserror::Error;

use super::{IqBuffer, SynthError};
use crate::spectrum::SignalClass;
use crate::time::Timestamp;

pub const IQ_MAGIC: [u8; 4] = *b"SIDQ";
pub const IQ_VERSION: u16 = 1;
const UNLABELLED: u8 = 0xFF;
const MAX_SAMPLES: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum IqFileError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown class label {0:#04x}")]
    BadLabel(u8),
    #[error("implausible sample count {0}")]
    BadLength(u64),
    #[error(transparent)]
    Buffer(#[from] SynthError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCapture {
    pub buffer: IqBuffer,
    pub label: Option<SignalClass>,
    pub snr_db: Option<f64>,
}

pub fn write_capture<W: Write>(w: &mut W, capture: &LabeledCapture) -> Result<(), IqFileError> {
    let buf = &capture.buffer;
    w.write_all(&IQ_MAGIC)?;
    w.write_u16::<LittleEndian>(IQ_VERSION)?;
    w.write_u8(capture.label.map_or(UNLABELLED, |c| c.index() as u8))?;
    w.write_u8(0)?;
    w.write_f64::<LittleEndian>(buf.sample_rate_hz())?;
    w.write_f64::<LittleEndian>(buf.center_freq_hz())?;
    w.write_f64::<LittleEndian>(capture.snr_db.unwrap_or(f64::NAN))?;
    w.write_u64::<LittleEndian>(buf.capture_time().as_millis())?;
    w.write_u64::<LittleEndian>(buf.len() as u64)?;
    let mut body = Vec::with_capacity(buf.len() * 8);
    for s in buf.samples() {
        body.write_f32::<LittleEndian>(s.re)?;
        body.write_f32::<LittleEndian>(s.im)?;
    }
    w.write_all(&body)?;
    Ok(())
}

fn read_one<R: Read>(r: &mut R, magic: [u8; 4]) -> Result<LabeledCapture, IqFileError> {
    if magic != IQ_MAGIC {
        return Err(IqFileError::BadMagic(magic));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != IQ_VERSION {
        return Err(IqFileError::UnsupportedVersion(version));
    }
    let label = match r.read_u8()? {
        UNLABELLED => None,
        b => Some(SignalClass::from_index(b as usize).ok_or(IqFileError::BadLabel(b))?),
    };
    let _reserved = r.read_u8()?;
    let rate = r.read_f64::<LittleEndian>()?;
    let center = r.read_f64::<LittleEndian>()?;
    let snr = r.read_f64::<LittleEndian>()?;
    let time = r.read_u64::<LittleEndian>()?;
    let n = r.read_u64::<LittleEndian>()?;
    if n == 0 || n > MAX_SAMPLES {
        return Err(IqFileError::BadLength(n));
    }
    let mut raw = vec![0u8; n as usize * 8];
    r.read_exact(&mut raw)?;
    let samples = raw
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex32::new(re, im)
        })
        .collect();
    let buffer = IqBuffer::new(samples, rate, center, Timestamp(time))?;
    Ok(LabeledCapture { buffer, label, snr_db: (!snr.is_nan()).then_some(snr) })
}

/// Reads every record until a clean end of stream.
pub fn read_captures<R: Read>(r: &mut R) -> Result<Vec<LabeledCapture>, IqFileError> {
    let mut out = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            match r.read(&mut magic[filled..])? {
                0 if filled == 0 => return Ok(out),
                0 => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
                k => filled += k,
            }
        }
        out.push(read_one(r, magic)?);
    }
}
