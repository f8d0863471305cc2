//! Grayscale image files: PGM (8 or 16 bit) and PFM (32-bit float).
//! Pixel values are mapped to `[0, 1]` for PGM and stored verbatim in PFM.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

/// Reads a PGM, binary (`P5`) or ASCII (`P2`), with any maxval up to 65535.
pub fn read_pgm(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io_at(path, e))?);
    let magic = next_token(&mut r)?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        _ => return Err(Error::Format(format!("{}: expected PGM, found {magic:?}", path.display()))),
    };
    let w = parse_header_int(next_token(&mut r)?)?;
    let h = parse_header_int(next_token(&mut r)?)?;
    let maxval = parse_header_int(next_token(&mut r)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("{}: invalid maxval {maxval}", path.display())));
    }
    let truncated = || Error::Format(format!("{}: truncated PGM data", path.display()));
    let samples: Vec<usize> = if binary {
        let width = if maxval < 256 { 1 } else { 2 };
        let mut bytes = vec![0u8; width * w * h];
        r.read_exact(&mut bytes).map_err(|_| truncated())?;
        if width == 1 {
            bytes.into_iter().map(usize::from).collect()
        } else {
            bytes.chunks_exact(2).map(|b| usize::from(u16::from_be_bytes([b[0], b[1]]))).collect()
        }
    } else {
        (0..w * h).map(|_| next_token(&mut r).map_err(|_| truncated()).and_then(parse_header_int)).collect::<Result<_>>()?
    };
    let scale = maxval as f64;
    Ok(Array2::from_shape_vec((h, w), samples.into_iter().map(|v| v as f64 / scale).collect()).expect("sample count checked"))
}

/// Writes a binary PGM, clamping values to `[0, 1]` and rounding to the
/// nearest level.
pub fn write_pgm(path: &Path, img: &Array2<f64>, depth: PgmDepth) -> Result<()> {
    let (h, w) = img.dim();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io_at(path, e))?);
    let maxval: u32 = match depth {
        PgmDepth::Eight => 255,
        PgmDepth::Sixteen => 65535,
    };
    write!(out, "P5\n{w} {h}\n{maxval}\n")?;
    for v in img.iter() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u16;
        match depth {
            PgmDepth::Eight => out.write_all(&[q as u8])?,
            PgmDepth::Sixteen => out.write_all(&q.to_be_bytes())?,
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_header_int(s: String) -> Result<usize> {
    s.parse().map_err(|_| Error::Format(format!("bad header field {s:?}")))
}

/// Next whitespace-separated token, skipping `#` comments.
fn next_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if in_comment {
            in_comment = c != b'\n';
            continue;
        }
        if c == b'#' && tok.is_empty() {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated header".into()));
    }
    String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII header".into()))
}

/// Reads a grayscale PFM (`Pf`). Rows are stored bottom to top; a negative
/// scale marks little-endian data.
pub fn read_pfm(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io_at(path, e))?);
    let magic = next_token(&mut r)?;
    if magic != "Pf" {
        return Err(Error::Format(format!("{}: expected grayscale PFM, found {magic:?}", path.display())));
    }
    let w = parse_header_int(next_token(&mut r)?)?;
    let h = parse_header_int(next_token(&mut r)?)?;
    let scale: f64 = next_token(&mut r)?.parse().map_err(|_| Error::Format("bad PFM scale".into()))?;
    let little = scale < 0.0;
    let mut bytes = vec![0u8; 4 * w * h];
    r.read_exact(&mut bytes).map_err(|_| Error::Format(format!("{}: truncated PFM data", path.display())))?;
    let mut img = Array2::zeros((h, w));
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        img[[h - 1 - i / w, i % w]] = v as f64;
    }
    Ok(img)
}

pub fn write_pfm(path: &Path, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io_at(path, e))?);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for row in (0..h).rev() {
        for col in 0..w {
            out.write_all(&(img[[row, col]] as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads PFM or PGM, chosen by the file's magic bytes.
pub fn read_image(path: &Path) -> Result<Array2<f64>> {
    let mut magic = [0u8; 2];
    File::open(path).map_err(|e| Error::io_at(path, e))?
        .read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: file too short", path.display())))?;
    match &magic {
        b"Pf" => read_pfm(path),
        b"P2" | b"P5" => read_pgm(path),
        _ => Err(Error::Format(format!("{}: not a PGM or grayscale PFM file", path.display()))),
    }
}

/// Writes PFM for `.pfm` paths and 16-bit PGM otherwise.
pub fn write_image(path: &Path, img: &Array2<f64>) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pfm") => write_pfm(path, img),
        _ => write_pgm(path, img, PgmDepth::Sixteen),
    }
}

/// Linearly rescales to `[0, 1]` for display (constant images map to 0).
pub fn normalize_for_display(img: &Array2<f64>) -> Array2<f64> {
    let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        img.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(img.raw_dim())
    }
}
