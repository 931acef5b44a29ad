//! Stream files: a 9-byte little-endian header (`b"TIMU"`, sample rate
//! u32, channel count u8) followed by time-major f32 samples. Generated
//! streams carry a `t,class,hand` CSV sidecar with their ground truth.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Frame, ImuStream, CHANNELS};
use crate::domain::{FingerClass, Hand};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TIMU";

pub fn write_stream<W: Write>(stream: &ImuStream, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&stream.sample_rate().to_le_bytes())?;
    out.write_all(&[CHANNELS as u8])?;
    let mut buf = Vec::with_capacity(stream.len() * CHANNELS * 4);
    for frame in stream.samples() {
        for &v in frame {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_stream<R: Read>(mut input: R) -> Result<ImuStream> {
    let mut header = [0u8; 9];
    input.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("not an accelerometer stream file".into()));
    }
    let sample_rate = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    let channels = header[8] as usize;
    if channels != CHANNELS {
        return Err(Error::Format(format!("expected {CHANNELS} channels, file has {channels}")));
    }
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() % (4 * CHANNELS) != 0 {
        return Err(Error::Format("truncated sample data".into()));
    }
    let samples = body
        .chunks_exact(4 * CHANNELS)
        .map(|chunk| {
            let mut frame: Frame = [0.0; CHANNELS];
            for (c, v) in chunk.chunks_exact(4).enumerate() {
                frame[c] = f32::from_le_bytes(v.try_into().expect("4 bytes")) as f64;
            }
            frame
        })
        .collect();
    ImuStream::new(sample_rate, samples)
}

pub fn save_stream(stream: &ImuStream, path: impl AsRef<Path>) -> Result<()> {
    write_stream(stream, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<ImuStream> {
    read_stream(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Ground truth for one injected event. `class` is `None` for an
/// out-of-distribution segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Label {
    pub t: usize,
    pub class: Option<FingerClass>,
    pub hand: Hand,
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    t: usize,
    class: String,
    hand: Hand,
}

pub const OOD_NAME: &str = "ood";

pub fn write_labels<W: Write>(labels: &[Label], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in labels {
        w.serialize(LabelRecord {
            t: l.t,
            class: l.class.map_or(OOD_NAME.to_owned(), |c| c.name().to_owned()),
            hand: l.hand,
        })
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<Label>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<LabelRecord>().enumerate() {
        // header is line 1
        let rec = rec.map_err(|e| Error::parse(i + 2, e.to_string()))?;
        let class = if rec.class == OOD_NAME {
            None
        } else {
            Some(rec.class.parse().map_err(|_| Error::parse(i + 2, format!("unknown class {:?}", rec.class)))?)
        };
        out.push(Label { t: rec.t, class, hand: rec.hand });
    }
    Ok(out)
}
