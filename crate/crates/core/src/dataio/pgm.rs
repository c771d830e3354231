//! Binary greymap (P5, maxval 255) frames.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

fn pgm_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Pgm {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Matrix> {
    let mut pos = 0;
    match next_token(bytes, &mut pos) {
        Some(b"P5") => {}
        Some(magic) => {
            return Err(pgm_err(
                path,
                format!(
                    "unsupported format {:?}, only binary P5 is read",
                    String::from_utf8_lossy(magic)
                ),
            ))
        }
        None => return Err(pgm_err(path, "empty file")),
    }
    let mut field = |name: &str| -> Result<usize> {
        let tok = next_token(bytes, &mut pos)
            .ok_or_else(|| pgm_err(path, format!("truncated header: missing {name}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pgm_err(path, format!("bad {name} {:?}", String::from_utf8_lossy(tok))))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(pgm_err(path, format!("maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(pgm_err(path, "zero-sized image"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(pgm_err(path, "truncated payload"));
    }
    pos += 1;
    let need = width * height;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(pgm_err(
            path,
            format!("truncated payload: {} bytes for {height}x{width}", payload.len()),
        ));
    }
    let data = payload[..need].iter().map(|&b| f64::from(b)).collect();
    Matrix::from_vec(height, width, data)
}

pub fn read_pgm(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_pgm(&bytes, path)
}

/// Encodes a frame, rounding and clamping each value to `0..=255`.
pub fn encode_pgm(frame: &Matrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.cols(), frame.rows()).into_bytes();
    out.extend(
        frame
            .as_slice()
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_pgm(path: &Path, frame: &Matrix) -> Result<()> {
    fs::write(path, encode_pgm(frame)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
