//! Binary netpbm codecs: PGM (P5) for vessel maps, PPM (P6) for fundus
//! images, maxval 255 only.
//!
//! Writes are canonical ("P5\n<w> <h>\n255\n" + payload) so that
//! write(read(f)) == f for canonically written files. Reads accept the wider
//! netpbm header grammar (runs of whitespace, '#' comments), but exactly one
//! whitespace byte separates the maxval from the payload, and nothing may
//! follow the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use vesselaudit_core::image::{ColorImage, GrayImage};

#[derive(Debug, thiserror::Error)]
pub enum NetpbmError {
    #[error("expected {expected} magic, found {got:?}")]
    WrongFormat { expected: &'static str, got: String },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("maxval {0} unsupported; only 255")]
    UnsupportedMaxval(u32),
    #[error("payload holds {got} bytes, header promises {expected}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("{0} bytes of trailing data after the payload")]
    TrailingData(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_gray(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn decode_gray(data: &[u8]) -> Result<GrayImage, NetpbmError> {
    let (w, h, payload) = parse_header(data, "P5")?;
    let expected = w.checked_mul(h).ok_or_else(|| {
        NetpbmError::MalformedHeader(format!("{w} x {h} pixels overflows"))
    })?;
    let payload = take_payload(payload, expected)?;
    Ok(GrayImage::new(w, h, payload.to_vec()).expect("length checked"))
}

pub fn write_gray(img: &GrayImage, path: &Path) -> Result<(), NetpbmError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_gray(img))?;
    Ok(())
}

pub fn read_gray(path: &Path) -> Result<GrayImage, NetpbmError> {
    decode_gray(&fs::read(path)?)
}

pub fn encode_color(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for ((&r, &g), &b) in img.red().iter().zip(img.green()).zip(img.blue()) {
        out.extend_from_slice(&[r, g, b]);
    }
    out
}

pub fn decode_color(data: &[u8]) -> Result<ColorImage, NetpbmError> {
    let (w, h, payload) = parse_header(data, "P6")?;
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| NetpbmError::MalformedHeader(format!("{w} x {h} pixels overflows")))?;
    let payload = take_payload(payload, expected)?;
    let n = w * h;
    let mut red = Vec::with_capacity(n);
    let mut green = Vec::with_capacity(n);
    let mut blue = Vec::with_capacity(n);
    for px in payload.chunks_exact(3) {
        red.push(px[0]);
        green.push(px[1]);
        blue.push(px[2]);
    }
    Ok(ColorImage::new(w, h, red, green, blue).expect("length checked"))
}

pub fn write_color(img: &ColorImage, path: &Path) -> Result<(), NetpbmError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_color(img))?;
    Ok(())
}

pub fn read_color(path: &Path) -> Result<ColorImage, NetpbmError> {
    decode_color(&fs::read(path)?)
}

fn take_payload(payload: &[u8], expected: usize) -> Result<&[u8], NetpbmError> {
    if payload.len() < expected {
        return Err(NetpbmError::TruncatedPayload { expected, got: payload.len() });
    }
    if payload.len() > expected {
        return Err(NetpbmError::TrailingData(payload.len() - expected));
    }
    Ok(payload)
}

/// Parses "<magic> <width> <height> <maxval>" and returns the payload slice
/// that starts right after the single whitespace byte following the maxval.
fn parse_header<'a>(data: &'a [u8], magic: &'static str) -> Result<(usize, usize, &'a [u8]), NetpbmError> {
    if data.len() < 2 || &data[..2] != magic.as_bytes() {
        let got = String::from_utf8_lossy(&data[..data.len().min(2)]).into_owned();
        return Err(NetpbmError::WrongFormat { expected: magic, got });
    }
    let mut pos = 2;
    let w = next_number(data, &mut pos, "width")?;
    let h = next_number(data, &mut pos, "height")?;
    let maxval = next_number(data, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(NetpbmError::UnsupportedMaxval(maxval as u32));
    }
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => Ok((w, h, &data[pos + 1..])),
        _ => Err(NetpbmError::MalformedHeader(
            "no whitespace between maxval and payload".into(),
        )),
    }
}

/// Reads one ASCII integer, skipping leading whitespace and '#' comments.
fn next_number(data: &[u8], pos: &mut usize, field: &str) -> Result<usize, NetpbmError> {
    loop {
        match data.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while !matches!(data.get(*pos), None | Some(b'\n')) {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while matches!(data.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(NetpbmError::MalformedHeader(format!("{field} is not a number")));
    }
    std::str::from_utf8(&data[start..*pos])
        .expect("digits are UTF-8")
        .parse()
        .map_err(|_| NetpbmError::MalformedHeader(format!("{field} out of range")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_1x1_black_pgm() {
        let img = GrayImage::new(1, 1, vec![0]).unwrap();
        assert_eq!(encode_gray(&img), b"P5\n1 1\n255\n\x00");
    }

    #[test]
    fn gray_round_trip_is_bit_exact() {
        let img = GrayImage::new(2, 2, vec![0, 255, 128, 7]).unwrap();
        let bytes = encode_gray(&img);
        let back = decode_gray(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_gray(&back), bytes);
    }

    #[test]
    fn color_round_trip_splits_channels() {
        let img = ColorImage::new(2, 1, vec![255, 1], vec![0, 2], vec![0, 3]).unwrap();
        let bytes = encode_color(&img);
        assert_eq!(&bytes[..9], b"P6\n2 1\n255\n"[..9].as_ref());
        let back = decode_color(&bytes).unwrap();
        assert_eq!(back.red(), &[255, 1]);
        assert_eq!(back.green(), &[0, 2]);
        assert_eq!(back.blue(), &[0, 3]);
    }

    #[test]
    fn header_grammar_accepts_comments_and_runs_of_whitespace() {
        let mut bytes = b"P5 # a comment\n # more\n 3\t1 \n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        let img = decode_gray(&bytes).unwrap();
        assert_eq!(img.pixels(), &[9, 8, 7]);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let err = decode_color(b"P5\n1 1\n255\n\x00").unwrap_err();
        assert!(matches!(err, NetpbmError::WrongFormat { expected: "P6", .. }));
    }

    #[test]
    fn truncated_and_trailing_payloads_are_distinct_errors() {
        assert!(matches!(
            decode_gray(b"P5\n2 2\n255\n\x00\x01\x02"),
            Err(NetpbmError::TruncatedPayload { expected: 4, got: 3 })
        ));
        assert!(matches!(
            decode_gray(b"P5\n1 1\n255\n\x00\x01"),
            Err(NetpbmError::TrailingData(1))
        ));
    }

    #[test]
    fn maxval_other_than_255_is_rejected() {
        assert!(matches!(
            decode_gray(b"P5\n1 1\n65535\n\x00\x00"),
            Err(NetpbmError::UnsupportedMaxval(65535))
        ));
    }

    #[test]
    fn missing_fields_are_malformed() {
        assert!(matches!(decode_gray(b"P5\n1\n"), Err(NetpbmError::MalformedHeader(_))));
        assert!(matches!(decode_gray(b"P5\nx 1\n255\n"), Err(NetpbmError::MalformedHeader(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("netpbm_test_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.pgm");
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 50 + y) as u8);
        write_gray(&img, &path).unwrap();
        assert_eq!(read_gray(&path).unwrap(), img);
        fs::remove_dir_all(&dir).unwrap();
    }
}
