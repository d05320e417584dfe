//! Binary frame records shared by the co-host media socket and the segment
//! payloads.
//!
//! A record is a fixed header followed by the pixel payload. All integers
//! are big-endian.
//!
//! ```text
//! offset size field
//!      0    4 magic "SFNL"
//!      4    1 camera_id
//!      5    1 flags
//!      6    2 width
//!      8    2 height
//!     10    8 pts_ms
//!     18    4 payload_len
//!     22    4 crc32 (IEEE) of the payload bytes
//! ```
//!
//! Without `FLAG_RLE` the payload is raw RGB8, row-major, top row first.
//! With it the payload is a sequence of `[count, r, g, b]` runs, count in
//! 1..=255.

use thiserror::Error;

use crate::render::Frame;
use crate::rig::RigMode;

pub const MAGIC: &[u8; 4] = b"SFNL";
pub const HEADER_LEN: usize = 26;
pub const FLAG_RLE: u8 = 0x01;
pub const FLAG_THUMBNAIL: u8 = 0x02;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MediaError {
    #[error("record shorter than its header ({0} bytes)")]
    Truncated(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("payload length {declared} does not match {actual} bytes present")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("crc mismatch: header {header:#010x}, payload {computed:#010x}")]
    Crc { header: u32, computed: u32 },
    #[error("payload does not decode to {width}x{height} pixels")]
    PixelCount { width: u16, height: u16 },
    #[error("unknown camera id {0}")]
    UnknownCamera(u8),
    #[error("frame too large for a record: {0}x{1}")]
    TooLarge(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub camera_id: u8,
    pub flags: u8,
    pub width: u16,
    pub height: u16,
    pub pts_ms: u64,
    pub payload_len: u32,
    pub crc32: u32,
}

impl RecordHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4] = self.camera_id;
        b[5] = self.flags;
        b[6..8].copy_from_slice(&self.width.to_be_bytes());
        b[8..10].copy_from_slice(&self.height.to_be_bytes());
        b[10..18].copy_from_slice(&self.pts_ms.to_be_bytes());
        b[18..22].copy_from_slice(&self.payload_len.to_be_bytes());
        b[22..26].copy_from_slice(&self.crc32.to_be_bytes());
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<RecordHeader, MediaError> {
        if bytes.len() < HEADER_LEN {
            return Err(MediaError::Truncated(bytes.len()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(MediaError::BadMagic);
        }
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        Ok(RecordHeader {
            camera_id: bytes[4],
            flags: bytes[5],
            width: u16_at(6),
            height: u16_at(8),
            pts_ms: u64::from_be_bytes(bytes[10..18].try_into().unwrap()),
            payload_len: u32_at(18),
            crc32: u32_at(22),
        })
    }
}

pub fn rle_encode(rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(rgb.len() / 8);
    let mut px = rgb.chunks_exact(3).peekable();
    while let Some(p) = px.next() {
        let mut run = 1u8;
        while run < u8::MAX && px.peek() == Some(&p) {
            px.next();
            run += 1;
        }
        out.extend_from_slice(&[run, p[0], p[1], p[2]]);
    }
    out
}

pub fn rle_decode(data: &[u8], expected_pixels: usize) -> Option<Vec<u8>> {
    if data.len() % 4 != 0 {
        return None;
    }
    let mut out = Vec::with_capacity(expected_pixels * 3);
    for run in data.chunks_exact(4) {
        if run[0] == 0 {
            return None;
        }
        for _ in 0..run[0] {
            out.extend_from_slice(&run[1..4]);
        }
        if out.len() > expected_pixels * 3 {
            return None;
        }
    }
    (out.len() == expected_pixels * 3).then_some(out)
}

/// Serializes a frame as one record.
pub fn encode_record(frame: &Frame, camera_id: u8, flags: u8) -> Result<Vec<u8>, MediaError> {
    let (Ok(width), Ok(height)) = (u16::try_from(frame.width), u16::try_from(frame.height)) else {
        return Err(MediaError::TooLarge(frame.width, frame.height));
    };
    let payload = if flags & FLAG_RLE != 0 { rle_encode(&frame.pixels) } else { frame.pixels.clone() };
    let header = RecordHeader {
        camera_id,
        flags,
        width,
        height,
        pts_ms: frame.pts,
        payload_len: payload.len() as u32,
        crc32: crc32fast::hash(&payload),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses and verifies one complete record.
pub fn decode_record(bytes: &[u8]) -> Result<(RecordHeader, Frame), MediaError> {
    let header = RecordHeader::parse(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != header.payload_len as usize {
        return Err(MediaError::LengthMismatch { declared: header.payload_len as usize, actual: payload.len() });
    }
    let computed = crc32fast::hash(payload);
    if computed != header.crc32 {
        return Err(MediaError::Crc { header: header.crc32, computed });
    }
    let label = RigMode::from_camera_id(header.camera_id).ok_or(MediaError::UnknownCamera(header.camera_id))?;
    let n = header.width as usize * header.height as usize;
    let pixels = if header.flags & FLAG_RLE != 0 {
        rle_decode(payload, n)
    } else {
        (payload.len() == n * 3).then(|| payload.to_vec())
    }
    .ok_or(MediaError::PixelCount { width: header.width, height: header.height })?;
    let frame = Frame {
        width: header.width as u32,
        height: header.height as u32,
        pixels,
        camera_label: label,
        pts: header.pts_ms,
    };
    Ok((header, frame))
}

/// Concatenates records, each prefixed with its big-endian u32 length.
pub fn pack_records<'a>(records: impl IntoIterator<Item = &'a [u8]>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        out.extend_from_slice(&(r.len() as u32).to_be_bytes());
        out.extend_from_slice(r);
    }
    out
}

/// Splits a length-prefixed record stream. Fails on a truncated tail.
pub fn unpack_records(mut bytes: &[u8]) -> Result<Vec<&[u8]>, MediaError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(MediaError::Truncated(bytes.len()));
        }
        let len = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let rest = &bytes[4..];
        if rest.len() < len {
            return Err(MediaError::LengthMismatch { declared: len, actual: rest.len() });
        }
        out.push(&rest[..len]);
        bytes = &rest[len..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Rgb8;
    use proptest::prelude::*;

    fn sample_frame() -> Frame {
        let mut f = Frame::filled(7, 3, Rgb8(1, 2, 3), RigMode::MapView).with_pts(123_456);
        f.set_pixel(4, 1, Rgb8(200, 0, 9));
        f
    }

    #[test]
    fn header_is_fixed_size_and_big_endian() {
        let bytes = encode_record(&sample_frame(), 4, 0).unwrap();
        assert_eq!(&bytes[0..4], b"SFNL");
        assert_eq!(bytes[4], 4);
        assert_eq!(&bytes[6..8], &[0, 7]);
        assert_eq!(&bytes[10..18], &123_456u64.to_be_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 7 * 3 * 3);
    }

    #[test]
    fn corrupted_payload_detected() {
        let mut bytes = encode_record(&sample_frame(), 4, FLAG_RLE).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        assert!(matches!(decode_record(&bytes), Err(MediaError::Crc { .. })));
    }

    #[test]
    fn truncated_stream_rejected() {
        let r = encode_record(&sample_frame(), 1, 0).unwrap();
        let packed = pack_records([r.as_slice(), r.as_slice()]);
        assert_eq!(unpack_records(&packed).unwrap().len(), 2);
        assert!(unpack_records(&packed[..packed.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn record_round_trip(w in 1u32..20, h in 1u32..12, seed: u64, rle: bool, pts: u64) {
            let mut f = Frame::filled(w, h, Rgb8(0, 0, 0), RigMode::ThirdFollow).with_pts(pts);
            let mut s = seed;
            for p in f.pixels.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                // Few distinct values so runs appear.
                *p = ((s >> 60) as u8) * 17;
            }
            let flags = if rle { FLAG_RLE } else { 0 };
            let bytes = encode_record(&f, RigMode::ThirdFollow.camera_id(), flags).unwrap();
            let (hdr, back) = decode_record(&bytes).unwrap();
            prop_assert_eq!(hdr.flags, flags);
            prop_assert_eq!(back, f);
        }
    }
}
