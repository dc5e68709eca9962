//! Binary PGM ("P5") reading and writing.
//!
//! Dataset images are stored as 16-bit binary PGM with maxval 65535 and
//! big-endian samples; a pixel value v in [0, 1] is quantized to
//! `round(v * 65535)`. The reader also accepts 8-bit files (maxval < 256,
//! one byte per sample) and upconverts by dividing by the stated maxval,
//! so every decoded pixel lies in [0, 1]. The write/read round trip is
//! exact at 16-bit resolution.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::wavefield::RealImage;

/// Encodes an image (values in [0, 1]) as a 16-bit binary PGM.
pub fn encode_pgm16(image: &RealImage) -> Result<Vec<u8>> {
    let n = image.n();
    let mut out = Vec::with_capacity(2 * n * n + 32);
    write!(out, "P5\n{n} {n}\n65535\n").expect("vec write");
    for &v in image.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parameter(format!(
                "PGM pixel values must lie in [0, 1], got {v}"
            )));
        }
        let q = (v * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm16(path: &Path, image: &RealImage) -> Result<()> {
    let bytes = encode_pgm16(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes an 8- or 16-bit binary PGM into a square image scaled to [0, 1].
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<RealImage> {
    let bad = |reason: &str| Error::Pgm {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }

    // Header: three whitespace-separated integers (width, height, maxval),
    // with '#' comments running to end of line, then exactly one whitespace
    // byte before the sample data.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(bad("truncated header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are utf-8");
        *field = text.parse().map_err(|_| bad("header field overflow"))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing whitespace after maxval"));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if width != height {
        return Err(bad("image must be square"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }

    let count = width * height;
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let body = &bytes[pos..];
    if body.len() != count * sample_bytes {
        return Err(bad(&format!(
            "expected {} sample bytes, found {}",
            count * sample_bytes,
            body.len()
        )));
    }

    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(count);
    if wide {
        for pair in body.chunks_exact(2) {
            let v = u16::from_be_bytes([pair[0], pair[1]]) as usize;
            if v > maxval {
                return Err(bad("sample exceeds maxval"));
            }
            data.push(v as f64 * scale);
        }
    } else {
        for &b in body {
            if b as usize > maxval {
                return Err(bad("sample exceeds maxval"));
            }
            data.push(b as f64 * scale);
        }
    }
    RealImage::new(width, data)
}

pub fn read_pgm(path: &Path) -> Result<RealImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("test.pgm")
    }

    #[test]
    fn round_trip_is_exact_at_16_bit() {
        let data: Vec<f64> = (0..64).map(|i| (i * 1033 % 65536) as f64 / 65535.0).collect();
        let img = RealImage::new(8, data).unwrap();
        let back = decode_pgm(&encode_pgm16(&img).unwrap(), &p()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn eight_bit_input_is_upconverted() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 102, 255]);
        let img = decode_pgm(&bytes, &p()).unwrap();
        assert_eq!(img.n(), 2);
        assert!((img.data()[1] - 0.2).abs() < 1e-12);
        assert_eq!(img.data()[3], 1.0);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 2\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        assert!(decode_pgm(&bytes, &p()).is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(decode_pgm(b"P6\n1 1\n255\n0", &p()).is_err());
        assert!(decode_pgm(b"P5\n2 3\n255\n", &p()).is_err()); // non-square
        let mut short = b"P5\n2 2\n65535\n".to_vec();
        short.extend_from_slice(&[0, 0, 0]);
        assert!(decode_pgm(&short, &p()).is_err()); // truncated body
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let img = RealImage::new(2, vec![0.0, 0.5, 2.0, 1.0]).unwrap();
        assert!(encode_pgm16(&img).is_err());
    }
}
