//! On-disk formats: 8-bit {0,255} mask PNGs, float32 energy/logits rasters
//! with a 16-byte header, and the line-oriented key-value format used for
//! manifests, metadata and configs. All formats round-trip losslessly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::energy::{EnergyMap, Logits};
use crate::mask::Mask;
use crate::scene::RgbImage;

pub const ENERGY_MAGIC: &[u8; 4] = b"EGY1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("png error: {0}")]
    Png(String),
    #[error("bad magic: expected EGY1")]
    BadMagic,
    #[error("file truncated: expected {expected} bytes of payload, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("dimension mismatch: {0}x{1} vs expected {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("mask PNG contains value {0}; only 0 and 255 are legal")]
    InvalidMaskValue(u8),
    #[error("unknown endianness flag {0}")]
    BadEndianFlag(u32),
    #[error("malformed key-value line {line}: {reason}")]
    MalformedKv { line: usize, reason: String },
}

// ---------------------------------------------------------------- mask PNG

/// PNG writer tuned for throughput; settings are fixed, so outputs stay
/// byte-reproducible.
fn write_png(
    path: &Path,
    data: &[u8],
    width: u32,
    height: u32,
    color: image::ExtendedColorType,
) -> Result<(), FormatError> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    use image::ImageEncoder;
    let file = fs::File::create(path)?;
    let writer = std::io::BufWriter::new(file);
    PngEncoder::new_with_quality(writer, CompressionType::Fast, FilterType::Adaptive)
        .write_image(data, width, height, color)
        .map_err(|e| FormatError::Png(e.to_string()))
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<(), FormatError> {
    let data: Vec<u8> = mask.as_raw().iter().map(|&v| v * 255).collect();
    write_png(path, &data, mask.width, mask.height, image::ExtendedColorType::L8)
}

pub fn read_mask_png(path: &Path) -> Result<Mask, FormatError> {
    let img = image::open(path).map_err(|e| FormatError::Png(e.to_string()))?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    let mut data = Vec::with_capacity((w * h) as usize);
    for &v in gray.as_raw() {
        match v {
            0 => data.push(0),
            255 => data.push(1),
            other => return Err(FormatError::InvalidMaskValue(other)),
        }
    }
    Ok(Mask::from_raw(w, h, data))
}

pub fn write_rgb_png(path: &Path, image: &RgbImage) -> Result<(), FormatError> {
    write_png(
        path,
        &image.data,
        image.width,
        image.height,
        image::ExtendedColorType::Rgb8,
    )
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage, FormatError> {
    let img = image::open(path)
        .map_err(|e| FormatError::Png(e.to_string()))?
        .into_rgb8();
    let (width, height) = img.dimensions();
    Ok(RgbImage {
        width,
        height,
        data: img.into_raw(),
    })
}

// ------------------------------------------------------------ EGY1 rasters

fn write_raster_into(out: &mut impl Write, width: u32, height: u32, data: &[f32]) -> Result<(), FormatError> {
    debug_assert_eq!(data.len(), width as usize * height as usize);
    out.write_all(ENERGY_MAGIC)?;
    out.write_all(&width.to_le_bytes())?;
    out.write_all(&height.to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?; // 0 = little-endian payload
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

fn read_raster_from(bytes: &[u8], offset: &mut usize) -> Result<(u32, u32, Vec<f32>), FormatError> {
    let rest = &bytes[*offset..];
    if rest.len() < 16 {
        return Err(FormatError::TruncatedFile {
            expected: 16,
            found: rest.len(),
        });
    }
    if &rest[0..4] != ENERGY_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let width = u32::from_le_bytes(rest[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(rest[8..12].try_into().unwrap());
    let endian = u32::from_le_bytes(rest[12..16].try_into().unwrap());
    let big = match endian {
        0 => false,
        1 => true,
        other => return Err(FormatError::BadEndianFlag(other)),
    };
    let n = width as usize * height as usize;
    let payload = &rest[16..];
    if payload.len() < n * 4 {
        return Err(FormatError::TruncatedFile {
            expected: n * 4,
            found: payload.len(),
        });
    }
    let mut data = Vec::with_capacity(n);
    for chunk in payload[..n * 4].chunks_exact(4) {
        let arr: [u8; 4] = chunk.try_into().unwrap();
        data.push(if big {
            f32::from_be_bytes(arr)
        } else {
            f32::from_le_bytes(arr)
        });
    }
    *offset += 16 + n * 4;
    Ok((width, height, data))
}

pub fn write_energy(path: &Path, energy: &EnergyMap) -> Result<(), FormatError> {
    let mut f = fs::File::create(path)?;
    write_raster_into(&mut f, energy.width, energy.height, &energy.data)
}

pub fn read_energy(path: &Path) -> Result<EnergyMap, FormatError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut offset = 0;
    let (width, height, data) = read_raster_from(&bytes, &mut offset)?;
    Ok(EnergyMap {
        width,
        height,
        data,
    })
}

/// Logits file: K consecutive EGY1 rasters (one per class plane); K is
/// inferred from the file length. Matches the in-memory planar layout.
pub fn write_logits(path: &Path, logits: &Logits) -> Result<(), FormatError> {
    let mut f = fs::File::create(path)?;
    for k in 0..logits.classes {
        write_raster_into(&mut f, logits.width, logits.height, logits.plane(k))?;
    }
    Ok(())
}

pub fn read_logits(path: &Path) -> Result<Logits, FormatError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut offset = 0;
    let mut planes: Vec<(u32, u32, Vec<f32>)> = Vec::new();
    while offset < bytes.len() {
        planes.push(read_raster_from(&bytes, &mut offset)?);
    }
    let Some(&(w, h, _)) = planes.first() else {
        return Err(FormatError::TruncatedFile {
            expected: 16,
            found: 0,
        });
    };
    for &(pw, ph, _) in &planes {
        if (pw, ph) != (w, h) {
            return Err(FormatError::DimensionMismatch(pw, ph, w, h));
        }
    }
    let k = planes.len();
    let n = w as usize * h as usize;
    let mut data = Vec::with_capacity(n * k);
    for (_, _, plane) in &planes {
        data.extend_from_slice(plane);
    }
    Ok(Logits {
        width: w,
        height: h,
        classes: k,
        data,
    })
}

// -------------------------------------------------------- key-value format

/// One manifest/meta record: ordered `key=value` pairs on a single line,
/// space separated. Values must not contain spaces (paths use `/`).
pub fn format_kv_line(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_kv_line(line: &str, line_no: usize) -> Result<Vec<(String, String)>, FormatError> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| FormatError::MalformedKv {
                    line: line_no,
                    reason: format!("token `{tok}` has no `=`"),
                })
        })
        .collect()
}

/// Config-file flavor: one `key = value` per line, `#` comments, blank
/// lines ignored.
pub fn parse_kv_file(text: &str) -> Result<Vec<(String, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| FormatError::MalformedKv {
            line: i + 1,
            reason: "expected `key = value`".into(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.egy");
        let e = EnergyMap {
            width: 7,
            height: 3,
            data: (0..21).map(|i| (i as f32).sin() * 1e3).collect(),
        };
        write_energy(&path, &e).unwrap();
        let back = read_energy(&path).unwrap();
        assert_eq!(e.data.len(), back.data.len());
        for (a, b) in e.data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.egy");
        fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_energy(&path), Err(FormatError::BadMagic)));
        let mut good = Vec::new();
        write_raster_into(&mut good, 4, 4, &[1.0; 16]).unwrap();
        good.truncate(30);
        fs::write(&path, &good).unwrap();
        assert!(matches!(
            read_energy(&path),
            Err(FormatError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn mask_png_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut m = Mask::new(9, 5);
        m.set(2, 2, true);
        m.set(8, 4, true);
        write_mask_png(&path, &m).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), m);

        // a gray value is illegal
        let img = image::GrayImage::from_fn(4, 4, |x, _| image::Luma([if x == 1 { 128 } else { 0 }]));
        let bad = dir.path().join("bad.png");
        img.save(&bad).unwrap();
        assert!(matches!(
            read_mask_png(&bad),
            Err(FormatError::InvalidMaskValue(128))
        ));
    }

    #[test]
    fn logits_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.lgt");
        let mut l = Logits::new(5, 4, 3);
        for (i, v) in l.data.iter_mut().enumerate() {
            *v = i as f32 * 0.25 - 3.0;
        }
        write_logits(&path, &l).unwrap();
        assert_eq!(read_logits(&path).unwrap(), l);
    }

    #[test]
    fn kv_line_round_trip() {
        let line = format_kv_line(&[
            ("kind", "obstacle".into()),
            ("bin", "25".into()),
            ("seed", "42".into()),
        ]);
        let pairs = parse_kv_line(&line, 1).unwrap();
        assert_eq!(pairs[1], ("bin".to_string(), "25".to_string()));
        assert!(parse_kv_line("novalue", 3).is_err());
    }

    #[test]
    fn kv_file_comments_and_blanks() {
        let text = "# header\n\nfocal_length = 2000\nlane_width = 3.5 # meters\n";
        let pairs = parse_kv_file(text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], ("focal_length".into(), "2000".into()));
        assert_eq!(pairs[1], ("lane_width".into(), "3.5".into()));
    }
}
