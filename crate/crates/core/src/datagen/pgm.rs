use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Binary PGM (P5, maxval 255). Values are rounded half-up; anything outside
/// `[0, 1]` is an error rather than being clamped.
pub fn encode_pgm(image: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match image.shape() {
        [h, w] => (*h, *w),
        s => return Err(Error::InvalidParameter(format!("PGM needs a 2-D image, got {s:?}"))),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for (i, &v) in image.data().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Range(format!("pixel {i} has value {v} outside [0, 1]")));
        }
        out.push((v * 255.0 + 0.5).floor() as u8);
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    // Header: magic, width, height, maxval, separated by whitespace; '#' starts a comment.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("unsupported PGM magic {:?}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let raster = bytes.get(pos + 1..).unwrap_or(&[]);
    if raster.len() != w * h {
        return Err(Error::Format(format!(
            "PGM raster has {} bytes, expected {}",
            raster.len(),
            w * h
        )));
    }
    let data = raster.iter().map(|&b| b as f64 / maxval as f64).collect();
    Tensor::new(vec![h, w], data)
}

pub fn write_pgm(image: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image)?)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    decode_pgm(&fs::read(path)?)
}
