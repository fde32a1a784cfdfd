//! Frame layout.
//!
//! A frame is 16 bits sent left to right in time:
//!
//! ```text
//! [b3 b2 b1 b0 = 1 0 1 0][p11 ... p0]
//! ```
//!
//! Payload bytes are serialized MSB first and cut into 12-bit groups; the last
//! group is zero padded. There is no length field and no checksum, so the
//! payload length travels out of band.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PREAMBLE: [bool; 4] = [true, false, true, false];
pub const PAYLOAD_BITS: usize = 12;
pub const FRAME_BITS: usize = PREAMBLE.len() + PAYLOAD_BITS;

/// Ordered sequence of binary symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitStream(Vec<bool>);

impl BitStream {
    pub fn new() -> Self {
        BitStream(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// MSB-first serialization of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        BitStream(
            bytes
                .iter()
                .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
                .collect(),
        )
    }

    /// Packs MSB first; a trailing partial byte is dropped.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks_exact(8)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
            .collect()
    }
}

impl From<Vec<bool>> for BitStream {
    fn from(bits: Vec<bool>) -> Self {
        BitStream(bits)
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitStream(iter.into_iter().collect())
    }
}

impl fmt::Display for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Parses a string of `0`/`1`; spaces, `_` and `|` are ignored as separators.
impl FromStr for BitStream {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !matches!(c, ' ' | '_' | '|'))
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::domain(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitStream)
    }
}

/// One on-air unit: the fixed preamble plus 12 payload bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    payload: [bool; PAYLOAD_BITS],
}

impl Frame {
    pub fn new(payload: [bool; PAYLOAD_BITS]) -> Self {
        Frame { payload }
    }

    pub fn payload(&self) -> &[bool; PAYLOAD_BITS] {
        &self.payload
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        PREAMBLE.iter().chain(self.payload.iter()).copied()
    }
}

/// Number of frames needed for `n_bytes` of payload: `ceil(8 n / 12)`.
pub fn frame_count(n_bytes: usize) -> usize {
    (8 * n_bytes).div_ceil(PAYLOAD_BITS)
}

pub fn frames_for(payload: &[u8]) -> Vec<Frame> {
    let bits = BitStream::from_bytes(payload);
    bits.bits()
        .chunks(PAYLOAD_BITS)
        .map(|chunk| {
            let mut p = [false; PAYLOAD_BITS];
            p[..chunk.len()].copy_from_slice(chunk);
            Frame::new(p)
        })
        .collect()
}

/// Serializes `payload` into consecutive frames.
pub fn encode_frames(payload: &[u8]) -> BitStream {
    frames_for(payload).iter().flat_map(|f| f.bits()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameError {
    /// Index of the 16-bit slot in the received stream.
    pub frame: usize,
    /// The four bits found where the preamble should be.
    pub found_preamble: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FrameReport {
    pub frames_total: usize,
    pub frames_ok: usize,
    pub errors: Vec<FrameError>,
    /// Bits left over after the last whole frame; nonzero means the stream was cut short.
    pub trailing_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameDecode {
    /// Concatenated 12-bit payloads of the frames whose preamble matched.
    pub payload_bits: BitStream,
    pub report: FrameReport,
}

impl FrameDecode {
    /// Every whole byte carried by the accepted frames. Includes any zero
    /// padding byte; use [`FrameDecode::payload`] when the length is known.
    pub fn bytes(&self) -> Vec<u8> {
        self.payload_bits.to_bytes()
    }

    /// Payload truncated to the out-of-band length.
    pub fn payload(&self, len: usize) -> Vec<u8> {
        let mut bytes = self.bytes();
        bytes.truncate(len);
        bytes
    }
}

/// Splits a received stream into 16-bit frames, checks each preamble and
/// collects the payloads of the frames that pass.
///
/// Frames with a wrong preamble contribute nothing to the payload.
pub fn decode_frames(bits: &BitStream) -> FrameDecode {
    let mut payload_bits = Vec::new();
    let mut report = FrameReport {
        trailing_bits: bits.len() % FRAME_BITS,
        ..FrameReport::default()
    };
    for (i, frame) in bits.bits().chunks_exact(FRAME_BITS).enumerate() {
        report.frames_total += 1;
        let (pre, payload) = frame.split_at(PREAMBLE.len());
        if pre == PREAMBLE {
            report.frames_ok += 1;
            payload_bits.extend_from_slice(payload);
        } else {
            report.errors.push(FrameError {
                frame: i,
                found_preamble: BitStream::from(pre.to_vec()).to_string(),
            });
        }
    }
    FrameDecode {
        payload_bits: BitStream(payload_bits),
        report,
    }
}
