//! Binary PGM/PPM grids of samples.

use std::path::Path;

use ndarray::Array2;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A decoded PGM (`channels == 1`) or PPM (`channels == 3`) image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

/// Maps a value in `[0, 1)` to a byte, clamping out-of-range values.
pub fn to_byte(x: f64) -> u8 {
    (x * 256.0).floor().clamp(0.0, 255.0) as u8
}

/// Tiles `rows × cols` samples (one per row of `samples`, values in
/// `[0, 1)`) into one image. Each sample is a square image stored row-major
/// with interleaved channels.
pub fn encode_grid(samples: &Array2<f64>, rows: usize, cols: usize, channels: usize) -> Result<Vec<u8>, ImageError> {
    if channels != 1 && channels != 3 {
        return Err(ImageError::ShapeMismatch(format!("{channels} channels; expected 1 or 3")));
    }
    if rows * cols != samples.nrows() {
        return Err(ImageError::ShapeMismatch(format!(
            "{rows}x{cols} grid for {} samples",
            samples.nrows()
        )));
    }
    let dim = samples.ncols();
    let side = ((dim / channels) as f64).sqrt().round() as usize;
    if side * side * channels != dim || dim == 0 {
        return Err(ImageError::ShapeMismatch(format!(
            "dimension {dim} is not a square image with {channels} channels"
        )));
    }
    let (width, height) = (cols * side, rows * side);
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + width * height * channels, 0);
    for (s, sample) in samples.outer_iter().enumerate() {
        let (gr, gc) = (s / cols, s % cols);
        for y in 0..side {
            for x in 0..side {
                for ch in 0..channels {
                    let v = sample[(y * side + x) * channels + ch];
                    let py = gr * side + y;
                    let px = gc * side + x;
                    out[header + (py * width + px) * channels + ch] = to_byte(v);
                }
            }
        }
    }
    Ok(out)
}

pub fn emit_grid(
    samples: &Array2<f64>,
    rows: usize,
    cols: usize,
    channels: usize,
    path: &Path,
) -> Result<(), ImageError> {
    std::fs::write(path, encode_grid(samples, rows, cols, channels)?)?;
    Ok(())
}

/// Parses a binary PGM/PPM with `maxval` 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<Pnm, ImageError> {
    let bad = |m: &str| ImageError::Malformed(m.into());
    let mut fields = Vec::with_capacity(4);
    let mut at = 0;
    while fields.len() < 4 {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if at < bytes.len() && bytes[at] == b'#' {
            while at < bytes.len() && bytes[at] != b'\n' {
                at += 1;
            }
            continue;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..at]).map_err(|_| bad("non-ASCII header"))?);
    }
    at += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        m => return Err(ImageError::Malformed(format!("unsupported magic {m}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let pixels = bytes.get(at..).unwrap_or(&[]).to_vec();
    if pixels.len() != width * height * channels {
        return Err(ImageError::Malformed(format!(
            "{} pixel bytes for a {width}x{height}x{channels} image",
            pixels.len()
        )));
    }
    Ok(Pnm {
        width,
        height,
        channels,
        pixels,
    })
}
