//! Binary PGM (P5) encode/decode.

use crate::error::{Error, Result};

/// Single-channel image with samples scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch(data.len(), width * height));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Quantizes to 8 bits.
    pub fn to_pgm(&self) -> Vec<u8> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        encode(self.width, self.height, &bytes)
    }
}

pub fn encode(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

/// Parses a P5 file with maxval up to 65535.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = [0usize; 3];
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    pos += 2;
    for f in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format("malformed PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let payload = &bytes[pos..];
    if payload.len() < width * height * bps {
        return Err(Error::Format("truncated PGM payload".into()));
    }
    let scale = 1.0 / maxval as f32;
    let data = if bps == 1 {
        payload[..width * height]
            .iter()
            .map(|&b| b as f32 * scale)
            .collect()
    } else {
        payload[..width * height * 2]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 * scale)
            .collect()
    };
    GrayImage::new(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_8bit() {
        let bytes = encode(3, 2, &[0, 51, 102, 153, 204, 255]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert_eq!(img.at(2, 1), 1.0);
        assert_eq!(img.to_pgm(), bytes);
    }

    #[test]
    fn header_comments_and_16bit() {
        let mut bytes = b"P5 # comment\n2 1\n# another\n1000\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0xF4, 0x03, 0xE8]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.data, vec![0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode(b"P5\n2 x\n255\n").is_err());
    }
}
